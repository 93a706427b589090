"""``splatlift`` command line.

Subcommands: uplift, render, backproject, evaluate, synth, info.

Tunables resolve as flag > ``--config`` JSON file > built-in default, and the
effective configuration is echoed into every output document. Exit codes:
0 success, 1 error (one ``error:<Kind>: message`` line on stderr), 2 empty
selection under ``--fail-on-empty``.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import __version__
from .camera_io import find_view, load_colmap_bundle
from .errors import InvalidConfig, MalformedRecord, MissingFile, SplatLiftError, UsageError
from .evaluate import HULL_KINDS, compare_masks, evaluate_view, hull_mask
from .mask_io import load_mask, save_mask
from .parallel import default_workers
from .rasterizer import backproject_mask, render
from .scene_io import load_splat_ply, write_splat_ply
from .synth import PRESETS, SynthSpec, generate, write_synth
from .uplift import UpliftConfig, uplift_mask

log = logging.getLogger("splatlift")

EXIT_OK, EXIT_ERROR, EXIT_EMPTY = 0, 1, 2


@dataclass
class RunConfig:
    scene: str | None = None
    cameras: str | None = None
    mask: str | None = None
    view: object = None  # str, or a list of names for evaluate
    sigma_k: float = 2.0
    footprint_sigma: float = 3.0
    radius: float = 2.0
    epsilon_cov: float = 0.3
    hull: str = "convex"
    k: int | None = None
    fill: bool = True
    fill_opacity: bool = False
    statistical_filter: bool = True
    saturation: float = 0.9999
    workers: int = 1

    def validate(self):
        if not self.sigma_k > 0:
            raise InvalidConfig(f"sigma_k must be > 0, got {self.sigma_k}")
        if not self.footprint_sigma > 0:
            raise InvalidConfig(f"footprint_sigma must be > 0, got {self.footprint_sigma}")
        if not self.radius > 0:
            raise InvalidConfig(f"radius must be > 0, got {self.radius}")
        if self.epsilon_cov < 0:
            raise InvalidConfig(f"epsilon_cov must be >= 0, got {self.epsilon_cov}")
        if self.hull not in HULL_KINDS:
            raise InvalidConfig(f"hull must be one of {', '.join(HULL_KINDS)}, got {self.hull!r}")
        if self.hull == "concave" and (self.k is None or self.k < 3):
            raise InvalidConfig("concave hull needs k >= 3")
        if not 0 < self.saturation <= 1:
            raise InvalidConfig(f"saturation must be in (0, 1], got {self.saturation}")
        if self.workers < 1:
            raise InvalidConfig(f"workers must be >= 1, got {self.workers}")
        return self

    def uplift_config(self) -> UpliftConfig:
        return UpliftConfig(
            sigma_k=self.sigma_k,
            footprint_sigma=self.footprint_sigma,
            epsilon_cov=self.epsilon_cov,
            statistical_filter=self.statistical_filter,
            fill=self.fill,
            fill_opacity_window=self.fill_opacity,
            workers=self.workers,
        )

    def to_dict(self) -> dict:
        return asdict(self)


CONFIG_KEYS = {f.name for f in fields(RunConfig)}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values = {"workers": default_workers()}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise MissingFile(f"{path}: no such config file") from e
        except json.JSONDecodeError as e:
            raise InvalidConfig(f"{path}: {e}") from e
        if not isinstance(loaded, dict):
            raise InvalidConfig(f"{path}: top level must be an object")
        unknown = sorted(set(loaded) - CONFIG_KEYS)
        if unknown:
            raise InvalidConfig(f"{path}: unknown keys {', '.join(unknown)}")
        values.update(loaded)
    values.update({k: v for k, v in vars(args).items() if k in CONFIG_KEYS})
    try:
        cfg = RunConfig(**values)
    except TypeError as e:
        raise InvalidConfig(str(e)) from e
    return cfg.validate()


# ---------------------------------------------------------------- helpers


def _require(cfg: RunConfig, *names):
    missing = [n for n in names if getattr(cfg, n) in (None, [], "")]
    if missing:
        raise UsageError("missing required input: " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _color(text: str):
    text = text.strip()
    if text.startswith("#") and len(text) == 7:
        return tuple(int(text[i:i + 2], 16) / 255.0 for i in (1, 3, 5))
    try:
        rgb = tuple(float(x) for x in text.split(","))
    except ValueError:
        rgb = ()
    if len(rgb) != 3 or not all(0.0 <= c <= 1.0 for c in rgb):
        raise UsageError(f"color must be '#rrggbb' or 'r,g,b' in [0, 1], got {text!r}")
    return rgb


def _load_view(cfg: RunConfig, name=None):
    views = load_colmap_bundle(cfg.cameras)
    return find_view(views, name if name is not None else cfg.view)


def _load_indices(path, scene_size=None) -> np.ndarray:
    p = Path(path)
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise MissingFile(f"{p}: no such indices document") from e
    except json.JSONDecodeError as e:
        raise MalformedRecord(f"{p}: {e}") from e
    sel = doc.get("selected") if isinstance(doc, dict) else doc
    if not isinstance(sel, list) or not all(isinstance(i, int) and not isinstance(i, bool) for i in sel):
        raise MalformedRecord(f"{p}: 'selected' must be a list of integers")
    idx = np.asarray(sel, dtype=np.int64)
    if scene_size is not None and idx.size and (idx.min() < 0 or idx.max() >= scene_size):
        raise MalformedRecord(f"{p}: index out of range for a scene of {scene_size} splats")
    return idx


def _emit(doc: dict, as_json: bool, lines):
    if as_json:
        sys.stdout.write(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    else:
        for line in lines:
            print(line)


# ---------------------------------------------------------------- commands


def cmd_uplift(args, cfg: RunConfig) -> int:
    _require(cfg, "scene", "cameras", "mask", "view")
    color = _color(args.highlight_color) if args.highlight_color else None
    scene = load_splat_ply(cfg.scene)
    view = _load_view(cfg)
    mask = load_mask(cfg.mask, expected_size=(view.width, view.height))
    result = uplift_mask(scene, view, mask, cfg.uplift_config())

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = {"indices": str(out / "indices.json"), "selection_ply": str(out / "selection.ply")}
    write_splat_ply(scene, outputs["selection_ply"], selection=result.selected)
    if color is not None:
        outputs["highlight_ply"] = str(out / "highlight.ply")
        write_splat_ply(scene, outputs["highlight_ply"], selection=result.selected, highlight_color=color)

    doc = {"command": "uplift", **result.to_document()}
    doc["mask_rescaled_from"] = list(mask.resampled_from) if mask.resampled_from else None
    doc["scene_size"] = len(scene)
    doc["outputs"] = outputs
    doc["config"] = cfg.to_dict()
    Path(outputs["indices"]).write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")

    lines = [f"view {result.view}: {result.status}, {len(result.selected)} of {len(scene)} splats selected"]
    lines += [f"  {k:<15}{v}" for k, v in doc["stages"].items()]
    lines += [f"  time {k:<19}{v:9.2f} ms" for k, v in doc["timings_ms"].items()]
    lines += [f"wrote {p}" for p in outputs.values()]
    _emit(doc, args.json, lines)
    if args.fail_on_empty and result.status == "empty":
        return EXIT_EMPTY
    return EXIT_OK


def cmd_render(args, cfg: RunConfig) -> int:
    _require(cfg, "scene", "cameras", "view")
    scene = load_splat_ply(cfg.scene)
    view = _load_view(cfg)
    selection = _load_indices(args.indices, len(scene)) if args.indices else None
    color = _color(args.highlight_color) if args.highlight_color else None
    if color is not None and selection is None:
        raise UsageError("--highlight-color needs --indices")
    target = render(scene, view, selection, color, cfg.saturation, cfg.footprint_sigma, cfg.epsilon_cov, cfg.workers)
    target.save(args.out)
    doc = {
        "command": "render",
        "view": view.image_name,
        "width": view.width,
        "height": view.height,
        "selected": None if selection is None else int(selection.size),
        "coverage": float(np.mean(target.alpha_acc > 0.5)),
        "output": str(args.out),
        "config": cfg.to_dict(),
    }
    _emit(doc, args.json, [f"rendered {view.image_name} ({view.width}x{view.height}) -> {args.out}"])
    return EXIT_OK


def cmd_backproject(args, cfg: RunConfig) -> int:
    _require(cfg, "scene", "cameras", "view")
    scene = load_splat_ply(cfg.scene)
    view = _load_view(cfg)
    selection = _load_indices(args.indices, len(scene))
    mask = backproject_mask(scene, view, selection, cfg.radius, cfg.epsilon_cov, cfg.workers)
    save_mask(mask, args.out)
    doc = {
        "command": "backproject",
        "view": view.image_name,
        "width": mask.width,
        "height": mask.height,
        "selected": int(selection.size),
        "set_pixels": mask.count,
        "output": str(args.out),
        "config": cfg.to_dict(),
    }
    _emit(doc, args.json, [f"{mask.count} pixels set in {view.image_name} -> {args.out}"])
    return EXIT_OK


def _mean(reports, key):
    return float(np.mean([r[key] for r in reports])) if reports else None


def cmd_evaluate(args, cfg: RunConfig) -> int:
    reports = []
    if args.pred:
        if not args.gt or len(args.gt) != 1:
            raise UsageError("--pred needs exactly one --gt")
        gt = load_mask(args.gt[0])
        pred = hull_mask(load_mask(args.pred, expected_size=gt.size), cfg.hull, cfg.k)
        rep = compare_masks(pred, gt)
        rep.hull_kind = cfg.hull
        rep.view = Path(args.pred).name
        reports.append(rep.to_dict())
    else:
        _require(cfg, "scene", "cameras", "view")
        if not args.indices:
            raise UsageError("missing required input: --indices (or use --pred)")
        names = [cfg.view] if isinstance(cfg.view, str) else list(cfg.view)
        if args.gt and args.gt_dir:
            raise UsageError("give either --gt or --gt-dir, not both")
        if args.gt and len(args.gt) != len(names):
            raise UsageError(f"{len(names)} views but {len(args.gt)} --gt masks")
        if not args.gt and not args.gt_dir:
            raise UsageError("missing ground truth: --gt or --gt-dir")
        scene = load_splat_ply(cfg.scene)
        views = load_colmap_bundle(cfg.cameras)
        selection = _load_indices(args.indices, len(scene))
        for i, name in enumerate(names):
            view = find_view(views, name)
            gt_path = args.gt[i] if args.gt else Path(args.gt_dir) / (Path(view.image_name).stem + ".png")
            gt = load_mask(gt_path, expected_size=(view.width, view.height))
            rep = evaluate_view(scene, view, selection, gt, cfg.hull, cfg.k, cfg.radius, cfg.epsilon_cov, cfg.workers)
            reports.append(rep.to_dict())

    doc = {
        "command": "evaluate",
        "reports": reports,
        "mean": {k: _mean(reports, k) for k in ("iou", "f1", "accuracy")},
        "config": cfg.to_dict(),
    }
    if args.csv:
        cols = ["view", "hull_kind", "iou", "f1", "accuracy", "tp", "fp", "fn", "tn", "timing_ms"]
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
            w.writeheader()
            w.writerows(reports)
        doc["csv"] = str(args.csv)
    lines = [f"{r['view']}: IoU {r['iou']:.4f}  F1 {r['f1']:.4f}  acc {r['accuracy']:.4f}  ({r['hull_kind']})" for r in reports]
    if len(reports) > 1:
        m = doc["mean"]
        lines.append(f"mean: IoU {m['iou']:.4f}  F1 {m['f1']:.4f}  acc {m['accuracy']:.4f}")
    _emit(doc, args.json, lines)
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    spec_args = {k: getattr(args, k) for k in ("preset", "seed", "n_foreground", "n_background", "n_floaters", "n_object_b", "n_cameras") if getattr(args, k) is not None}
    spec = SynthSpec(**spec_args)
    result = generate(spec)
    meta = write_synth(result, args.out)
    out = Path(args.out)
    doc = {
        "command": "synth",
        "preset": spec.preset,
        "seed": spec.seed,
        "front_view": meta["front_view"],
        "groups": meta["groups"],
        "views": [v.image_name for v in result.views],
        "files": {
            "scene": str(out / "scene.ply"),
            "cameras": str(out / "sparse"),
            "labels": str(out / "labels.json"),
            "masks": {k: str(out / v) for k, v in meta["masks"].items()},
        },
        "spec": spec.to_dict(),
        "config": cfg.to_dict(),
    }
    lines = [f"{spec.preset} (seed {spec.seed}) -> {out}"] + [f"  {g:<12}{n}" for g, n in meta["groups"].items()]
    _emit(doc, args.json, lines)
    return EXIT_OK


def cmd_info(args, cfg: RunConfig) -> int:
    if not cfg.scene and not cfg.cameras:
        raise UsageError("info needs --scene and/or --cameras")
    doc = {"command": "info", "scene": None, "views": None, "config": cfg.to_dict()}
    lines = []
    if cfg.scene:
        scene = load_splat_ply(cfg.scene)
        info = {"path": str(cfg.scene), "count": len(scene), "properties": [n for n, _ in scene.layout],
                "extra_sh_coeffs": len(scene.extra_sh_coeffs.dtype.names or ()),
                "bounds": None, "opacity": None}
        if len(scene):
            lo, hi = scene.bounds()
            a = scene.alphas
            info["bounds"] = {"min": [float(x) for x in lo], "max": [float(x) for x in hi]}
            info["opacity"] = {"mean": float(a.mean()), "min": float(a.min()), "max": float(a.max())}
        doc["scene"] = info
        lines.append(f"scene {cfg.scene}: {len(scene)} splats, {len(scene.layout)} properties")
        if info["bounds"]:
            lines.append(f"  bounds {info['bounds']['min']} .. {info['bounds']['max']}")
    if cfg.cameras:
        views = load_colmap_bundle(cfg.cameras)
        doc["views"] = [
            {"name": v.image_name, "width": v.width, "height": v.height,
             "fx": v.intrinsics.fx, "fy": v.intrinsics.fy, "cx": v.intrinsics.cx, "cy": v.intrinsics.cy,
             "center": [float(x) for x in v.extrinsics.camera_center]}
            for v in views
        ]
        lines.append(f"cameras {cfg.cameras}: {len(views)} views")
        lines += [f"  {v['name']}  {v['width']}x{v['height']}  f=({v['fx']:g}, {v['fy']:g})" for v in doc["views"]]
    _emit(doc, args.json, lines)
    return EXIT_OK


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file of defaults (flags override it)")
    common.add_argument("--workers", type=int, default=S, help="worker threads (default: $SPLATLIFT_WORKERS or 1)")
    common.add_argument("--json", action="store_true", help="print the output document as JSON")

    inputs = _Parser(add_help=False)
    inputs.add_argument("--scene", default=S, help="splat PLY")
    inputs.add_argument("--cameras", default=S, help="SfM model directory")
    inputs.add_argument("--epsilon-cov", dest="epsilon_cov", type=float, default=S)

    p = _Parser(prog="splatlift", description="Lift a single-view 2D mask into a Gaussian splat selection.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    u = sub.add_parser("uplift", parents=[common, inputs], help="select the splats behind a mask")
    u.add_argument("--view", default=S)
    u.add_argument("--mask", default=S)
    u.add_argument("--out", required=True, help="output directory")
    u.add_argument("--sigma-k", dest="sigma_k", type=float, default=S)
    u.add_argument("--footprint-sigma", dest="footprint_sigma", type=float, default=S)
    u.add_argument("--no-filter", dest="statistical_filter", action="store_false", default=S)
    u.add_argument("--no-fill", dest="fill", action="store_false", default=S)
    u.add_argument("--fill-opacity", dest="fill_opacity", action="store_true", default=S,
                   help="fill pass also applies the opacity window")
    u.add_argument("--highlight-color", help="also write highlight.ply with the selection recolored")
    u.add_argument("--fail-on-empty", action="store_true", help="exit 2 when nothing is selected")
    u.set_defaults(func=cmd_uplift)

    r = sub.add_parser("render", parents=[common, inputs], help="render a view to an RGB image")
    r.add_argument("--view", default=S)
    r.add_argument("--out", required=True)
    r.add_argument("--indices", help="indices document; renders only the selection unless highlighting")
    r.add_argument("--highlight-color")
    r.add_argument("--saturation", type=float, default=S)
    r.add_argument("--footprint-sigma", dest="footprint_sigma", type=float, default=S)
    r.set_defaults(func=cmd_render)

    b = sub.add_parser("backproject", parents=[common, inputs], help="union of selected splat footprints as a mask")
    b.add_argument("--view", default=S)
    b.add_argument("--indices", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--radius", type=float, default=S, help="Mahalanobis radius (default 2)")
    b.set_defaults(func=cmd_backproject)

    e = sub.add_parser("evaluate", parents=[common, inputs], help="IoU / F1 / accuracy against ground truth")
    e.add_argument("--view", action="append", default=S, help="repeat for several views")
    e.add_argument("--indices")
    e.add_argument("--pred", help="compare this mask image directly instead of back-projecting")
    e.add_argument("--gt", action="append", help="ground-truth mask, one per --view")
    e.add_argument("--gt-dir", help="directory of <view stem>.png ground-truth masks")
    e.add_argument("--radius", type=float, default=S)
    e.add_argument("--hull", choices=HULL_KINDS, default=S)
    e.add_argument("--k", type=int, default=S, help="concave hull neighborhood")
    e.add_argument("--csv", help="write one row per view")
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic scene with ground truth")
    s.add_argument("--preset", choices=PRESETS)
    s.add_argument("--seed", type=int)
    s.add_argument("--n-foreground", type=int)
    s.add_argument("--n-background", type=int)
    s.add_argument("--n-floaters", type=int)
    s.add_argument("--n-object-b", type=int)
    s.add_argument("--n-cameras", type=int)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    i = sub.add_parser("info", parents=[common], help="summarize a scene and/or camera bundle")
    i.add_argument("--scene", default=S)
    i.add_argument("--cameras", default=S)
    i.set_defaults(func=cmd_info)
    return p


def _one_line(text: str) -> str:
    return " ".join(str(text).split())


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except SplatLiftError as e:
        print(f"error:{e.kind}: {_one_line(e)}", file=sys.stderr)
    except (OSError, ValueError) as e:
        print(f"error:{type(e).__name__}: {_one_line(e)}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
