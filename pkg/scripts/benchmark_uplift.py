"""Time uplift_mask stage by stage on synthetic scenes of increasing size.

    python3 scripts/benchmark_uplift.py --sizes 10000 100000 1000000 --repeat 3
"""

import argparse
import json
import time

import numpy as np

from splatlift.synth import benchmark_scene
from splatlift.uplift import UpliftConfig, uplift_mask


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sizes", type=int, nargs="+", default=[10_000, 100_000, 1_000_000])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()

    config = UpliftConfig(workers=args.workers)
    rows = []
    for n in args.sizes:
        t0 = time.perf_counter()
        synth, mask = benchmark_scene(n, seed=args.seed)
        build = time.perf_counter() - t0
        uplift_mask(synth.scene, synth.front_view, mask, config)  # compile and warm caches
        walls, stages = [], []
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            res = uplift_mask(synth.scene, synth.front_view, mask, config)
            walls.append(time.perf_counter() - t0)
            stages.append(res.timings_ms)
        best = int(np.argmin(walls))
        rows.append({
            "splats": n,
            "mask_fraction": mask.count / mask.bits.size,
            "build_s": build,
            "wall_s_best": walls[best],
            "wall_s_median": float(np.median(walls)),
            "stages_ms": stages[best],
            "stage_counts": res.stage_counts,
        })

    if args.json:
        print(json.dumps(rows, indent=2))
        return
    print(f"{'splats':>10} {'mask':>6} {'best s':>8} {'median s':>9}  stages (ms)")
    for r in rows:
        st = "  ".join(f"{k} {v:.1f}" for k, v in r["stages_ms"].items() if k != "total")
        print(f"{r['splats']:>10,} {r['mask_fraction']:>6.1%} {r['wall_s_best']:>8.3f} {r['wall_s_median']:>9.3f}  {st}")


if __name__ == "__main__":
    main()
