"""Ablate the statistical filter and the depth fill on the synthetic presets.

For each configuration prints stage counts and the membership precision,
recall and IoU of the final selection against the generator's labels, plus
how many injected floaters survive.

    python3 scripts/filter_ablation.py --preset floaters --seed 0
"""

import argparse

import numpy as np

from splatlift.synth import PRESETS, SynthSpec, generate
from splatlift.uplift import UpliftConfig, uplift_mask

CONFIGS = {
    "full": UpliftConfig(),
    "no filter": UpliftConfig(statistical_filter=False),
    "no fill": UpliftConfig(fill=False),
    "neither": UpliftConfig(statistical_filter=False, fill=False),
    "fill + opacity": UpliftConfig(fill_opacity_window=True),
    "sigma_k 1": UpliftConfig(sigma_k=1.0),
    "sigma_k 3": UpliftConfig(sigma_k=3.0),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--preset", choices=PRESETS, default="floaters")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    s = generate(SynthSpec(preset=args.preset, seed=args.seed))
    view = s.front_view
    mask = s.masks[view.image_name]
    fg = s.group("foreground")
    floaters = s.group("floater")
    print(f"{args.preset} seed {args.seed}: {s.counts()}")
    print(f"{'config':<16}{'gated':>7}{'zbuf':>6}{'depth':>7}{'opac':>6}{'final':>7}"
          f"{'prec':>8}{'recall':>8}{'IoU':>8}{'floaters':>10}")
    for name, cfg in CONFIGS.items():
        res = uplift_mask(s.scene, view, mask, cfg)
        c = res.stage_counts
        hit = np.isin(res.selected, fg).sum()
        prec = hit / len(res.selected) if len(res.selected) else 0.0
        rec = hit / len(fg)
        iou = hit / (len(res.selected) + len(fg) - hit)
        fl = int(np.isin(floaters, res.selected).sum())
        print(f"{name:<16}{c['in_mask']:>7}{c['zbuffer']:>6}{c['depth_filter']:>7}{c['opacity_filter']:>6}"
              f"{c['fill']:>7}{prec:>8.3f}{rec:>8.3f}{iou:>8.3f}{fl:>7}/{len(floaters)}")


if __name__ == "__main__":
    main()
