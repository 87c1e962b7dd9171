"""Prior log-densities and their local changes.

* hard-core (Strauss) term: 0 or -inf
* area interaction: N log(lambda_a) - log(gamma_a) * area_scale * U, where U
  is the volume of the union of influence cuboids measured in cuboid volumes
* GMRF on the log-intensities with precision P / sigma^2
* gamma-MRF background marginal (auxiliary W integrated out)

Each influence cuboid covers the 3x3 pixel columns around its point and the
depth interval [t - n_b - 1/2, t + n_b + 1/2], i.e. 9 * (2 n_b + 1) voxels.
"""
from __future__ import annotations

import math

import numpy as np

from .config import HyperParameters
from .points import PointConfiguration, point_distance

NEG_INF = -math.inf


# --- hard core ---------------------------------------------------------------
def strauss_log_density(cfg: PointConfiguration, d_min: float | None = None) -> float:
    d = cfg.d_min if d_min is None else d_min
    for ids in cfg.pixels.values():
        ts = [cfg.points[q].t for q in ids]
        for a, b in zip(ts, ts[1:]):
            if b - a < d:
                return NEG_INF
    return 0.0


# --- area interaction --------------------------------------------------------
def _union_length(intervals: list[tuple[float, float]]) -> float:
    if not intervals:
        return 0.0
    intervals.sort()
    total = 0.0
    lo, hi = intervals[0]
    for a, b in intervals[1:]:
        if a > hi:
            total += hi - lo
            lo, hi = a, b
        elif b > hi:
            hi = b
    return total + (hi - lo)


def _column_intervals(cfg: PointConfiguration, cx: int, cy: int, exclude=()) -> list[tuple[float, float]]:
    h = cfg.n_b + 0.5
    out = []
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for q in cfg.pixels.get((cx + dx, cy + dy), ()):
                if q not in exclude:
                    t = cfg.points[q].t
                    out.append((t - h, t + h))
    return out


def cuboid_volume(n_b: int) -> float:
    return 9.0 * (2 * n_b + 1)


def local_union_measure(cfg: PointConfiguration, x: int, y: int) -> float:
    """Union measure restricted to the 3x3 columns around pixel (x, y), in cuboid units.

    Every cuboid of a point in pixel (x, y) lies inside these columns, so the
    difference of this quantity across an edit confined to (x, y) equals the
    change of the global union measure.
    """
    total = 0.0
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            total += _union_length(_column_intervals(cfg, x + dx, y + dy))
    return total / cuboid_volume(cfg.n_b)


def union_measure(cfg: PointConfiguration) -> float:
    """m(union of all cuboids) in units of one cuboid volume."""
    cols = set()
    for p in cfg:
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                cols.add((p.x + dx, p.y + dy))
    total = sum(_union_length(_column_intervals(cfg, cx, cy)) for cx, cy in sorted(cols))
    return total / cuboid_volume(cfg.n_b)


def uncovered_measure(cfg: PointConfiguration, x: int, y: int, t: float, exclude=()) -> float:
    """m(S(c) minus the union of the other cuboids) for a point c at (x, y, t)."""
    h = cfg.n_b + 0.5
    lo, hi = t - h, t + h
    total = 0.0
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            ivs = [(max(a, lo), min(b, hi)) for a, b in _column_intervals(cfg, x + dx, y + dy, exclude)
                   if b > lo and a < hi]
            total += (hi - lo) - _union_length(ivs)
    return total / cuboid_volume(cfg.n_b)


def area_interaction_log_density(cfg: PointConfiguration, hyper: HyperParameters) -> float:
    return len(cfg) * math.log(hyper.lambda_a) - hyper.log_gamma * union_measure(cfg)


def area_interaction_delta(cfg: PointConfiguration, point, action: str, hyper: HyperParameters) -> float:
    """Log-density change for adding ``point`` = (x, y, t) or removing an existing id."""
    lg = hyper.log_gamma
    if action == "add":
        x, y, t = point
        return math.log(hyper.lambda_a) - lg * uncovered_measure(cfg, x, y, t)
    if action == "remove":
        p = cfg.points[point]
        return -(math.log(hyper.lambda_a) - lg * uncovered_measure(cfg, p.x, p.y, p.t, exclude=(p.pid,)))
    raise ValueError(f"unknown action {action!r}")


def area_interaction_shift_delta(cfg: PointConfiguration, pid: int, t_new: float,
                                 hyper: HyperParameters) -> float:
    p = cfg.points[pid]
    before = uncovered_measure(cfg, p.x, p.y, p.t, exclude=(pid,))
    after = uncovered_measure(cfg, p.x, p.y, t_new, exclude=(pid,))
    return -hyper.log_gamma * (after - before)


def gamma_a_one_reduction_check(cfg: PointConfiguration, hyper: HyperParameters) -> bool:
    """With gamma_a = 1 the area-interaction density must reduce to N log(lambda_a)."""
    if hyper.gamma_a != 1:
        raise ValueError("reduction only holds for gamma_a = 1")
    return area_interaction_log_density(cfg, hyper) == len(cfg) * math.log(hyper.lambda_a)


# --- GMRF on log-intensities -------------------------------------------------
def edge_weight(cfg: PointConfiguration, a: int, b: int) -> float:
    pa, pb = cfg.points[a], cfg.points[b]
    return 1.0 / point_distance(pa.x, pa.y, pa.t, pb.x, pb.y, pb.t, cfg.l_z)


def degree(cfg: PointConfiguration, pid: int) -> float:
    return sum(edge_weight(cfg, pid, q) for q in cfg.adj[pid])


def gmrf_quadratic(cfg: PointConfiguration, beta: float) -> float:
    """m' P m = beta sum m^2 + sum over edges w (m_a - m_b)^2."""
    q = 0.0
    for p in cfg:
        q += beta * p.m * p.m
        for r in cfg.adj[p.pid]:
            if r > p.pid:
                d = p.m - cfg.points[r].m
                q += edge_weight(cfg, p.pid, r) * d * d
    return q


def local_quadratic(cfg: PointConfiguration, ids, beta: float) -> float:
    """Terms of m' P m that involve ``ids`` (which must be mutually non-adjacent)."""
    q = 0.0
    for a in ids:
        pa = cfg.points[a]
        q += beta * pa.m * pa.m
        for r in cfg.adj[a]:
            d = pa.m - cfg.points[r].m
            q += edge_weight(cfg, a, r) * d * d
    return q


def precision_matrix(cfg: PointConfiguration, ids, beta: float) -> np.ndarray:
    """Rows/columns of P for ``ids``; diagonals use the full neighbour degree."""
    ids = list(ids)
    pos = {q: n for n, q in enumerate(ids)}
    P = np.zeros((len(ids), len(ids)))
    for n, a in enumerate(ids):
        s = beta
        for r in cfg.adj[a]:
            w = edge_weight(cfg, a, r)
            s += w
            if r in pos:
                P[n, pos[r]] = -w
        P[n, n] = s
    return P


def window_log_det(cfg: PointConfiguration, ids, beta: float) -> float:
    ids = [q for q in ids if q in cfg.points]
    if not ids:
        return 0.0
    sign, ld = np.linalg.slogdet(precision_matrix(cfg, sorted(ids), beta))
    assert sign > 0, "precision window must be positive definite"
    return float(ld)


def full_log_det(cfg: PointConfiguration, beta: float) -> float:
    """log |P| summed over connected components."""
    labels = cfg.surface_labels()
    comps: dict[int, list[int]] = {}
    for q, lab in labels.items():
        comps.setdefault(lab, []).append(q)
    return sum(window_log_det(cfg, c, beta) for c in comps.values())


def edit_window(before: PointConfiguration, after: PointConfiguration, edited) -> set[int]:
    """Edited ids plus their neighbours in either configuration."""
    w = set(edited)
    for cfg in (before, after):
        for q in edited:
            if q in cfg.points:
                w |= cfg.adj[q]
    return w


def local_precision_log_det_ratio(before: PointConfiguration, after: PointConfiguration,
                                  edited, beta: float) -> float:
    """Approximate log|P'| - log|P| from the window of edited points and neighbours."""
    w = edit_window(before, after, edited)
    return window_log_det(after, w, beta) - window_log_det(before, w, beta)


def exact_precision_log_det_ratio(before: PointConfiguration, after: PointConfiguration,
                                  edited, beta: float) -> float:
    """Exact log|P'| - log|P|: only components touching the edit window change."""
    w = edit_window(before, after, edited)
    return (window_log_det(after, after.component(w), beta)
            - window_log_det(before, before.component(w), beta))


def gmrf_log_density(cfg: PointConfiguration, hyper: HyperParameters) -> float:
    """Exact log N(m; 0, sigma^2 P^-1)."""
    n = len(cfg)
    return (-0.5 * gmrf_quadratic(cfg, hyper.beta) / hyper.sigma2
            - 0.5 * n * math.log(2 * math.pi * hyper.sigma2)
            + 0.5 * full_log_det(cfg, hyper.beta))


def gmrf_conditional(cfg: PointConfiguration, x: int, y: int, t: float, beta: float, exclude=()):
    """(precision factor D, mean) of m for a point placed at (x, y, t) given its neighbours.

    The conditional is N(mean, sigma^2 / D).
    """
    D, s = beta, 0.0
    for q in cfg.candidate_neighbours(x, y, t, exclude):
        pq = cfg.points[q]
        w = 1.0 / point_distance(x, y, t, pq.x, pq.y, pq.t, cfg.l_z)
        D += w
        s += w * pq.m
    return D, s / D


def gmrf_conditional_log_density(cfg: PointConfiguration, pid: int, m: float,
                                 hyper: HyperParameters, normalized: bool = False) -> float:
    """-(1/2 sigma^2)(sum_nbr w (m - m')^2 + beta m^2), optionally normalized in m."""
    q = hyper.beta * m * m
    D = hyper.beta
    for r in cfg.adj[pid]:
        w = edge_weight(cfg, pid, r)
        q += w * (m - cfg.points[r].m) ** 2
        D += w
    val = -0.5 * q / hyper.sigma2
    if normalized:
        p = cfg.points[pid]
        _, mu = gmrf_conditional(cfg, p.x, p.y, p.t, hyper.beta, exclude=(pid,))
        val = -0.5 * D * (m - mu) ** 2 / hyper.sigma2 + 0.5 * math.log(D / (2 * math.pi * hyper.sigma2))
    return val


# --- gamma-MRF background ----------------------------------------------------
def neighbourhood_sizes(shape) -> np.ndarray:
    """|M(w_n)|: the cell itself plus its in-grid 4-neighbours."""
    nr, nc = shape
    s = np.ones((nr, nc))
    s[1:, :] += 1
    s[:-1, :] += 1
    s[:, 1:] += 1
    s[:, :-1] += 1
    return s


def neighbourhood_sums(B: np.ndarray) -> np.ndarray:
    """S_n = sum of b over the cell and its in-grid 4-neighbours."""
    S = B.copy()
    S[1:, :] += B[:-1, :]
    S[:-1, :] += B[1:, :]
    S[:, 1:] += B[:, :-1]
    S[:, :-1] += B[:, 1:]
    return S


def background_marginal_log_density(B: np.ndarray, alpha: float) -> float:
    """sum (alpha - 1) log b - alpha sum log S_n, up to a constant."""
    B = np.asarray(B, dtype=float)
    if np.any(B <= 0):
        return NEG_INF
    return float((alpha - 1) * np.log(B).sum() - alpha * np.log(neighbourhood_sums(B)).sum())


def gamma_mrf_joint_log_density(B: np.ndarray, W: np.ndarray, alpha: float) -> float:
    """Joint of (B, W) whose W-marginal is ``background_marginal_log_density``.

    w_n couples to b over its neighbourhood with weight kappa_n = alpha / |M(w_n)|;
    the constant is chosen so that integrating W out leaves no extra terms.
    """
    B = np.asarray(B, dtype=float)
    W = np.asarray(W, dtype=float)
    if np.any(B <= 0) or np.any(W <= 0):
        return NEG_INF
    kappa = alpha / neighbourhood_sizes(B.shape)
    S = neighbourhood_sums(B)
    const = -B.size * math.lgamma(alpha) + alpha * np.log(kappa).sum()
    return float((alpha - 1) * np.log(B).sum() - (alpha + 1) * np.log(W).sum()
                 - (kappa * S / W).sum() + const)
