import json
from importlib.resources import files

import jsonschema
import numpy as np
import pytest
from PIL import Image

from splatlift.cli import RunConfig, main
from splatlift.mask_io import Mask2D, load_mask, save_mask
from splatlift.parallel import WORKERS_ENV
from splatlift.scene_io import load_splat_ply
from splatlift.synth import load_labels

FRONT = "cam_02.png"


def _schema(command):
    return json.loads((files("splatlift") / "schemas" / f"{command}.schema.json").read_text())


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--json")
    assert code == 0, err
    doc = json.loads(out)
    jsonschema.validate(doc, _schema(argv[0]))
    return doc


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--preset", "cluster-wall", "--seed", "0", "--out", str(d)]) == 0
    return d


@pytest.fixture(scope="module")
def uplifted(synth_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("uplift")
    argv = ["uplift", "--scene", synth_dir / "scene.ply", "--cameras", synth_dir / "sparse", "--view", FRONT,
            "--mask", synth_dir / "masks" / "cam_02.png", "--out", out]
    assert main([str(a) for a in argv]) == 0
    return out


def _inputs(d, view=FRONT):
    return ["--scene", d / "scene.ply", "--cameras", d / "sparse", "--view", view]


# ---- documents and schemas


def test_synth_document(capsys, tmp_path):
    doc = run_json(capsys, "synth", "--preset", "floaters", "--n-foreground", 50, "--n-background", 100,
                   "--n-floaters", 5, "--out", tmp_path)
    assert doc["groups"] == {"foreground": 50, "background": 100, "floater": 5}
    assert doc["front_view"] == FRONT and len(doc["views"]) == 5
    assert (tmp_path / "scene.ply").exists() and (tmp_path / "labels.json").exists()


def test_uplift_document_and_membership(capsys, synth_dir, tmp_path):
    doc = run_json(capsys, "uplift", *_inputs(synth_dir), "--mask", synth_dir / "masks" / "cam_02.png",
                   "--out", tmp_path, "--highlight-color", "#ff0000")
    labels = load_labels(synth_dir / "labels.json")
    sel = set(doc["selected"])
    fg = set(np.flatnonzero(labels == "foreground").tolist())
    assert len(sel & fg) / len(sel | fg) >= 0.9
    assert doc["config"]["sigma_k"] == 2.0 and doc["scene_size"] == 5000
    saved = json.loads((tmp_path / "indices.json").read_text())
    assert saved["selected"] == doc["selected"]
    assert len(load_splat_ply(tmp_path / "selection.ply")) == len(sel)
    hl = load_splat_ply(tmp_path / "highlight.ply")
    assert len(hl) == 5000 and np.allclose(hl.colors[doc["selected"]], [1, 0, 0], atol=1e-6)


def test_render_document(capsys, synth_dir, uplifted, tmp_path):
    doc = run_json(capsys, "render", *_inputs(synth_dir), "--out", tmp_path / "r.png",
                   "--indices", uplifted / "indices.json", "--highlight-color", "0,1,0")
    img = np.asarray(Image.open(tmp_path / "r.png"))
    assert img.shape == (480, 640, 3) and doc["selected"] > 0 and 0 < doc["coverage"] <= 1


def test_backproject_and_evaluate_end_to_end(capsys, synth_dir, uplifted, tmp_path):
    doc = run_json(capsys, "backproject", *_inputs(synth_dir), "--indices", uplifted / "indices.json",
                   "--out", tmp_path / "bp.png")
    assert doc["set_pixels"] == load_mask(tmp_path / "bp.png").count > 0
    ev = run_json(capsys, "evaluate", *_inputs(synth_dir), "--indices", uplifted / "indices.json",
                  "--gt", synth_dir / "masks" / "cam_02.png", "--csv", tmp_path / "m.csv")
    assert ev["reports"][0]["iou"] >= 0.85
    assert (tmp_path / "m.csv").read_text().startswith("view,hull_kind,iou")


def test_evaluate_several_views(capsys, synth_dir, uplifted):
    doc = run_json(capsys, "evaluate", "--scene", synth_dir / "scene.ply", "--cameras", synth_dir / "sparse",
                   "--view", "cam_01.png", "--view", "cam_03.png", "--indices", uplifted / "indices.json",
                   "--gt-dir", synth_dir / "masks", "--hull", "concave", "--k", 8)
    assert [r["view"] for r in doc["reports"]] == ["cam_01.png", "cam_03.png"]
    assert all(r["iou"] >= 0.75 and r["hull_kind"] == "concave" for r in doc["reports"])
    assert doc["mean"]["iou"] == pytest.approx(np.mean([r["iou"] for r in doc["reports"]]))


def test_evaluate_identical_masks(capsys, synth_dir):
    m = synth_dir / "masks" / "cam_00.png"
    doc = run_json(capsys, "evaluate", "--pred", m, "--gt", m, "--hull", "none")
    assert doc["reports"][0]["iou"] == 1.0 and doc["reports"][0]["f1"] == 1.0


def test_info_document(capsys, synth_dir):
    doc = run_json(capsys, "info", "--scene", synth_dir / "scene.ply", "--cameras", synth_dir / "sparse")
    assert doc["scene"]["count"] == 5000 and len(doc["views"]) == 5
    assert doc["views"][2]["width"] == 640


def test_human_output(capsys, synth_dir):
    code, out, _ = run(capsys, "info", "--cameras", synth_dir / "sparse")
    assert code == 0 and "5 views" in out


# ---- exit codes


def test_backproject_empty_indices(capsys, synth_dir, tmp_path):
    (tmp_path / "e.json").write_text('{"selected": []}')
    doc = run_json(capsys, "backproject", *_inputs(synth_dir), "--indices", tmp_path / "e.json",
                   "--out", tmp_path / "bp.png")
    assert doc["set_pixels"] == 0 and load_mask(tmp_path / "bp.png").is_empty()


def test_empty_selection_exit_codes(capsys, synth_dir, tmp_path):
    save_mask(Mask2D.empty(640, 480), tmp_path / "black.png")
    args = ["uplift", *_inputs(synth_dir), "--mask", tmp_path / "black.png", "--out", tmp_path / "o"]
    assert run(capsys, *args)[0] == 0
    code, out, _ = run(capsys, *args, "--fail-on-empty", "--json")
    assert code == 2 and json.loads(out)["status"] == "empty"


def test_missing_view_lists_available(capsys, synth_dir, tmp_path):
    code, out, err = run(capsys, "uplift", *_inputs(synth_dir, "nope.png"),
                         "--mask", synth_dir / "masks" / "cam_02.png", "--out", tmp_path)
    assert code == 1 and out == ""
    assert err.startswith("error:ViewNotFound:") and "cam_00.png" in err and err.count("\n") == 1


@pytest.mark.parametrize(
    "argv, kind",
    [
        (["uplift", "--out", "x"], "UsageError"),
        (["frobnicate"], "UsageError"),
        (["info"], "UsageError"),
        (["info", "--scene", "/nonexistent.ply"], "IoFailure"),
        (["info", "--cameras", "/nonexistent"], "MissingFile"),
        (["render", "--scene", "s", "--cameras", "c", "--view", "v", "--out", "o", "--saturation", "2"], "InvalidConfig"),
        (["evaluate", "--pred", "a.png"], "UsageError"),
    ],
)
def test_error_prefix(capsys, argv, kind):
    code, _, err = run(capsys, *argv)
    assert code == 1 and err.startswith(f"error:{kind}:")


def test_bad_indices_document(capsys, synth_dir, tmp_path):
    (tmp_path / "bad.json").write_text('{"selected": [1, "two"]}')
    code, _, err = run(capsys, "backproject", *_inputs(synth_dir), "--indices", tmp_path / "bad.json",
                       "--out", tmp_path / "o.png")
    assert code == 1 and err.startswith("error:MalformedRecord:")
    (tmp_path / "oob.json").write_text('{"selected": [99999]}')
    code, _, err = run(capsys, "backproject", *_inputs(synth_dir), "--indices", tmp_path / "oob.json",
                       "--out", tmp_path / "o.png")
    assert code == 1 and "out of range" in err


# ---- configuration


def test_config_precedence(capsys, synth_dir, tmp_path, monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, "3")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sigma_k": 3.0, "footprint_sigma": 2.5, "scene": str(synth_dir / "scene.ply")}))
    doc = run_json(capsys, "uplift", "--config", cfg, "--cameras", synth_dir / "sparse", "--view", FRONT,
                   "--mask", synth_dir / "masks" / "cam_02.png", "--out", tmp_path / "o", "--sigma-k", 1.5)
    c = doc["config"]
    assert c["sigma_k"] == 1.5  # flag beats file
    assert c["footprint_sigma"] == 2.5  # file beats default
    assert c["radius"] == RunConfig.radius and c["workers"] == 3  # environment default


def test_config_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"sigmak": 2}')
    code, _, err = run(capsys, "info", "--config", cfg, "--scene", "x")
    assert code == 1 and err.startswith("error:InvalidConfig:") and "sigmak" in err


def test_no_fill_selects_subset(capsys, synth_dir, uplifted, tmp_path):
    doc = run_json(capsys, "uplift", *_inputs(synth_dir), "--mask", synth_dir / "masks" / "cam_02.png",
                   "--out", tmp_path, "--no-fill")
    full = json.loads((uplifted / "indices.json").read_text())
    assert doc["stages"]["opacity_filter"] == full["stages"]["opacity_filter"]
    assert set(doc["selected"]) <= set(full["selected"])
    assert doc["config"]["fill"] is False


def _strip(doc):
    doc = dict(doc)
    doc.pop("timings_ms", None)
    doc["config"] = {k: v for k, v in doc["config"].items() if k != "workers"}
    doc.pop("outputs", None)
    return doc


def test_workers_do_not_change_documents(capsys, synth_dir, tmp_path):
    docs = []
    for w in (1, 8):
        docs.append(run_json(capsys, "uplift", *_inputs(synth_dir), "--mask", synth_dir / "masks" / "cam_02.png",
                             "--out", tmp_path / str(w), "--workers", w))
    assert _strip(docs[0]) == _strip(docs[1])
    assert json.dumps(docs[0]["selected"]) == json.dumps(docs[1]["selected"])
    bp = []
    for w in (1, 8):
        run_json(capsys, "backproject", *_inputs(synth_dir), "--indices", tmp_path / "1" / "indices.json",
                 "--out", tmp_path / f"bp{w}.png", "--workers", w)
        bp.append((tmp_path / f"bp{w}.png").read_bytes())
    assert bp[0] == bp[1]


def test_mask_rescaled(capsys, synth_dir, tmp_path):
    small = load_mask(synth_dir / "masks" / "cam_02.png").bits[::2, ::2]
    save_mask(Mask2D(small), tmp_path / "half.png")
    doc = run_json(capsys, "uplift", *_inputs(synth_dir), "--mask", tmp_path / "half.png", "--out", tmp_path / "o")
    assert doc["mask_rescaled_from"] == [320, 240] and doc["status"] == "ok"
