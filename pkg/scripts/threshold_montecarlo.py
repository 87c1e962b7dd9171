"""Retention of the true depth and kept volume for several support-threshold rules.

A 3x3 block of fine pixels, T = 1500 bins, IRF attack/decay 20/80. Each fine
pixel receives lambda_p photons on average at the given SBR, from a return at
a common random depth. The block is binned to one coarse pixel (the
threshold runs on the coarsest scale), thresholded, and we record whether
the true bin survives and what fraction of bins is kept.

Rules compared:
  kappa=k   score >= rho*sum(w) + k*sqrt(rho*sum(w^2))  (implemented, k = 0.5)
  literal   sum z log h(t - t0) >= (0.05/T) * sum z * sum log h, unit-sum h
  literal-w the same inequality with the positive weights w = log(h/eps)
"""
import argparse

import numpy as np

from lidarpp.data import GroundTruthScene, bin_cube, generate_cube, matched_filter_scores
from lidarpp.multires import threshold_support
from lidarpp.scenes import skewed_irf
from lidarpp.support import merge_intervals

ap = argparse.ArgumentParser()
ap.add_argument("--trials", type=int, default=1000)
ap.add_argument("--sbr", type=float, default=0.05)
ap.add_argument("--photons", type=float, nargs="+", default=[5, 10, 25, 50])
args = ap.parse_args()

T = 1500
irf = skewed_irf(20, 80)
H = irf.total_sum
log_h = np.log(np.maximum(irf.samples, irf.eps) / H)      # unit-sum IRF, floored
eps_term = np.log(irf.eps / H)


def kept_from_mask(ok, margin):
    idx = np.flatnonzero(ok)
    if idx.size == 0:
        return []
    br = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([idx[0]], idx[br + 1]))
    ends = np.concatenate((idx[br], [idx[-1]]))
    return merge_intervals([(s - margin, e + margin) for s, e in zip(starts, ends)])


def evaluate(ivs, t):
    keep = sum(min(hi, T - 1) - max(lo, 0) for lo, hi in ivs) / (T - 1)
    return any(lo <= t <= hi for lo, hi in ivs), keep


rules = ["kappa=0.5", "kappa=1", "literal", "literal-w"]
print(f"SBR = {args.sbr}, {args.trials} trials per photon level")
print("lambda_p  " + "  ".join(f"{r:>22s}" for r in rules) + "   (retention / kept fraction)")
for lam in args.photons:
    sig = lam * args.sbr / (1 + args.sbr)
    bg = lam / (1 + args.sbr) / T
    rng = np.random.default_rng(int(lam * 1000))
    stats = {r: [] for r in rules}
    for _ in range(args.trials):
        t = float(rng.uniform(200, T - 200))
        ii, jj = np.divmod(np.arange(9), 3)
        sc = GroundTruthScene(3, 3, T, ii, jj, np.full(9, t), np.full(9, sig * H), np.full((3, 3), bg))
        cube = bin_cube(generate_cube(sc, irf, seed=int(rng.integers(1 << 31))), 3)
        for r in rules[:2]:
            sup = threshold_support(cube, irf, float(r.split("=")[1]))
            stats[r].append(evaluate(sup.intervals.get(0, []), t))
        bins, z = cube.bins, cube.counts
        if bins.size == 0:
            stats["literal"].append((False, 0.0))
            stats["literal-w"].append((False, 0.0))
            continue
        Z = z.sum()
        raw = matched_filter_scores(bins, z, irf, T) + Z * eps_term
        ok = raw >= (0.05 / T) * Z * log_h.sum()
        stats["literal"].append(evaluate(kept_from_mask(ok, irf.extent), t))
        score_w = raw - Z * eps_term
        ok_w = score_w >= (0.05 / T) * Z * irf.log_weights.sum()
        stats["literal-w"].append(evaluate(kept_from_mask(ok_w, irf.extent), t))
    line = []
    for r in rules:
        a = np.array(stats[r], dtype=float)
        line.append(f"{a[:, 0].mean():.3f} / {a[:, 1].mean():.3f}")
    print(f"{lam:8g}  " + "  ".join(f"{s:>22s}" for s in line), flush=True)
