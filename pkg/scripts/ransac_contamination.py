"""Scale-shift recovery by least squares and RANSAC as junk contamination grows."""

import argparse

import numpy as np

from depthray.alignment import RansacConfig, fit_scale_shift_lsq, ransac_scale_shift
from depthray.errors import DegenerateFit
from depthray.geometry import DepthMap


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--pixels", type=int, default=100, help="side of the square depth map")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--fractions", type=float, nargs="+", default=[0.0, 0.1, 0.3, 0.5, 0.7])
    a = ap.parse_args()
    print(f"{'junk':>5} {'lsq err':>10} {'ransac err':>11} {'junk excluded':>14}")
    for frac in a.fractions:
        lsq, rns, excl = [], [], []
        for seed in range(a.seeds):
            rng = np.random.default_rng(seed)
            pred = rng.uniform(0.5, 5.0, (a.pixels, a.pixels))
            s0, t0 = rng.uniform(0.5, 3.0), rng.uniform(-1.0, 3.0)
            gt = s0 * pred + t0
            junk = rng.random(gt.shape) < frac
            gt[junk] = rng.uniform(gt.min(), gt.max(), junk.sum())
            f = fit_scale_shift_lsq(DepthMap(pred), DepthMap(gt))
            lsq.append(max(abs(f.s - s0), abs(f.t - t0)))
            try:
                r, inl = ransac_scale_shift(DepthMap(pred), DepthMap(gt), RansacConfig(seed=seed))
            except DegenerateFit:
                rns.append(np.inf)
                continue
            rns.append(max(abs(r.s - s0), abs(r.t - t0)))
            if junk.any():
                excl.append((junk & ~inl).sum() / junk.sum())
        ex = f"{100 * min(excl):13.1f}%" if excl else f"{'-':>14}"
        print(f"{frac:5.2f} {max(lsq):10.2e} {max(rns):11.2e} {ex}")


if __name__ == "__main__":
    main()
