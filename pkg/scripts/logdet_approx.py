"""Error of the local precision log-determinant ratio against the exact component ratio.

For random connected configurations of n points, remove one point and compare
the windowed ratio (edited point plus its neighbours, full-degree diagonals)
with the exact ratio over the affected components. Two layouts are used:
surface patches (one point per pixel on a tilted plane) and random trees
(each point attached to one earlier point). A third column shows the
variant whose window diagonals count only in-window edges.
"""
import argparse

import numpy as np

from lidarpp.config import HyperParameters
from lidarpp.points import PointConfiguration
from lidarpp.priors import (edge_weight, edit_window, exact_precision_log_det_ratio,
                            local_precision_log_det_ratio)

ap = argparse.ArgumentParser()
ap.add_argument("--trials", type=int, default=100)
ap.add_argument("--window", type=int, default=1, help="binning window of the scale")
args = ap.parse_args()
hyper = HyperParameters.for_scale(33, 33, args.window, 0.3, 1.2, fine=args.window == 1)


def patch(rng, n, size=12):
    cfg = PointConfiguration(size, size, hyper.n_b, hyper.d_min, hyper.l_z, 2000)
    a, b = rng.uniform(-0.3, 0.3, 2) * hyper.n_b
    pix = {(size // 2, size // 2)}
    while len(pix) < n:
        x, y = sorted(pix)[rng.integers(len(pix))]
        dx, dy = (int(v) for v in rng.integers(-1, 2, size=2))
        if 0 <= x + dx < size and 0 <= y + dy < size:
            pix.add((x + dx, y + dy))
    for x, y in sorted(pix):
        cfg.insert(x, y, 1000 + a * x + b * y + rng.uniform(-1, 1), float(rng.normal()))
    return cfg


def tree(rng, n, size=12):
    cfg = PointConfiguration(size, size, hyper.n_b, hyper.d_min, hyper.l_z, 2000)
    cfg.insert(size // 2, size // 2, 1000.0, 0.0)
    while len(cfg) < n:
        p = cfg.points[sorted(cfg.points)[rng.integers(len(cfg))]]
        dx, dy = (int(v) for v in rng.integers(-1, 2, size=2))
        x, y, t = p.x + dx, p.y + dy, p.t + rng.uniform(-hyper.n_b, hyper.n_b)
        if (dx or dy) and 0 <= x < size and 0 <= y < size and cfg.can_place(x, y, t):
            cfg.insert(x, y, float(t), float(rng.normal()))
    return cfg


def induced_log_det(cfg, ids):
    ids = sorted(q for q in ids if q in cfg.points)
    pos = {q: i for i, q in enumerate(ids)}
    P = np.eye(len(ids)) * hyper.beta
    for a in ids:
        for r in cfg.adj[a]:
            if r in pos:
                w = edge_weight(cfg, a, r)
                P[pos[a], pos[a]] += w
                P[pos[a], pos[r]] -= w
    return np.linalg.slogdet(P)[1] if ids else 0.0


def errors(gen, n, rng):
    local, induced = [], []
    for _ in range(args.trials):
        cfg = gen(rng, n)
        q = sorted(cfg.points)[rng.integers(len(cfg))]
        after = cfg.copy()
        after.remove(q)
        exact = exact_precision_log_det_ratio(cfg, after, {q}, hyper.beta)
        local.append(local_precision_log_det_ratio(cfg, after, {q}, hyper.beta) - exact)
        w = edit_window(cfg, after, {q})
        induced.append(induced_log_det(after, w) - induced_log_det(cfg, w) - exact)
    return np.abs(local).mean(), np.abs(induced).mean()


print(f"beta = {hyper.beta:g}, n_b = {hyper.n_b}, l_z = {hyper.l_z:g}; mean |error| over "
      f"{args.trials} trials")
print(f"{'n':>3} {'patch':>8} {'tree':>8} {'patch, in-window diag':>22}")
rng = np.random.default_rng(0)
for n in (2, 3, 5, 8, 12, 16, 20):
    pl, pi = errors(patch, n, rng)
    tl, _ = errors(tree, n, rng)
    print(f"{n:>3} {pl:8.3f} {tl:8.3f} {pi:22.3f}")
