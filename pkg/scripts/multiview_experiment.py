"""Segment from the front camera, then score the selection in every ring view.

Reports IoU / F1 / accuracy per view and hull kind, plus the spread across
views, for one or more seeds of a synthetic preset.

    python3 scripts/multiview_experiment.py --preset cluster-wall --seeds 0 1 2
"""

import argparse
import csv
import sys

import numpy as np

from splatlift.evaluate import evaluate_view
from splatlift.synth import PRESETS, SynthSpec, generate
from splatlift.uplift import uplift_mask


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--preset", choices=PRESETS, default="cluster-wall")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--cameras", type=int, default=5)
    ap.add_argument("--k", type=int, default=8, help="concave hull neighborhood")
    ap.add_argument("--csv", help="also write one row per (seed, view, hull)")
    args = ap.parse_args()

    rows = []
    for seed in args.seeds:
        s = generate(SynthSpec(preset=args.preset, seed=seed, n_cameras=args.cameras))
        front = s.front_view
        res = uplift_mask(s.scene, front, s.masks[front.image_name])
        for view in s.views:
            for hull, k in (("none", None), ("convex", None), ("concave", args.k)):
                r = evaluate_view(s.scene, view, res.selected, s.masks[view.image_name], hull, k)
                rows.append({"seed": seed, "view": view.image_name, "input": view is front, "hull": hull,
                             "iou": r.iou, "f1": r.f1, "accuracy": r.accuracy})

    print(f"{'seed':>4}  {'view':<12} {'hull':<8} {'IoU':>7} {'F1':>7} {'acc':>7}")
    for r in rows:
        tag = " *" if r["input"] else ""
        print(f"{r['seed']:>4}  {r['view']:<12} {r['hull']:<8} {r['iou']:>7.4f} {r['f1']:>7.4f} {r['accuracy']:>7.4f}{tag}")
    print("(* input view)")
    for hull in ("none", "convex", "concave"):
        unseen = [r["iou"] for r in rows if r["hull"] == hull and not r["input"]]
        seen = [r["iou"] for r in rows if r["hull"] == hull and r["input"]]
        print(f"{hull:<8} input IoU {np.mean(seen):.4f}  unseen mean {np.mean(unseen):.4f}  "
              f"min {np.min(unseen):.4f}  max gap {max(abs(u - np.mean(seen)) for u in unseen):.4f}")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
        print(f"wrote {args.csv}", file=sys.stderr)


if __name__ == "__main__":
    main()
