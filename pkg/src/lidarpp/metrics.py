"""Detection curves, NMSE measures and the SBR / photon-budget sweep."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import GroundTruthScene


@dataclass
class DetectionCurve:
    taus: np.ndarray
    f_true: np.ndarray     # fraction of truth points matched
    f_false: np.ndarray    # number of unmatched estimated points
    n_truth: int
    n_est: int


def _as_arrays(est):
    """Accept a PointConfiguration or a (rows, cols, depths[, ...]) tuple."""
    if hasattr(est, "to_arrays"):
        r, c, t, _ = est.to_arrays()
        return r, c, t
    return np.asarray(est[0]), np.asarray(est[1]), np.asarray(est[2], dtype=float)


def _candidate_pairs(er, ec, et, tr, tc, tt, tau_max):
    """Same-pixel (|dt|, est index, truth index) with |dt| <= tau_max, sorted."""
    by_pix: dict[tuple[int, int], list[int]] = {}
    for n, (a, b) in enumerate(zip(tr.tolist(), tc.tolist())):
        by_pix.setdefault((a, b), []).append(n)
    pairs = []
    for n, (a, b, t) in enumerate(zip(er.tolist(), ec.tolist(), et.tolist())):
        for m in by_pix.get((a, b), ()):
            d = abs(t - tt[m])
            if d <= tau_max:
                pairs.append((d, n, m))
    pairs.sort()
    return pairs


def detection_curves(estimate, truth: GroundTruthScene, taus) -> DetectionCurve:
    """One-to-one greedy matching by increasing |dt| within the same pixel."""
    taus = np.asarray(taus, dtype=float)
    er, ec, et = _as_arrays(estimate)
    tr, tc, tt = truth.rows, truth.cols, truth.depths
    pairs = _candidate_pairs(er, ec, et, tr, tc, tt, taus.max() if taus.size else 0.0)
    n_truth, n_est = int(tr.size), int(er.size)
    # greedy on the globally sorted list; the matches at a smaller tau are a prefix
    used_e, used_t = set(), set()
    match_d = []
    for d, n, m in pairs:
        if n in used_e or m in used_t:
            continue
        used_e.add(n); used_t.add(m)
        match_d.append(d)
    match_d = np.array(match_d)
    matched = np.array([(match_d <= tau).sum() for tau in taus], dtype=np.int64)
    f_true = matched / n_truth if n_truth else np.zeros(taus.size)
    return DetectionCurve(taus, f_true, n_est - matched, n_truth, n_est)


def gated_intensity_image(rows, cols, depths, intensities, shape, gate) -> np.ndarray:
    """Per-pixel maximum intensity among points with depth inside [lo, hi]."""
    lo, hi = gate
    img = np.zeros(shape)
    rows, cols = np.asarray(rows), np.asarray(cols)
    depths, intensities = np.asarray(depths, dtype=float), np.asarray(intensities, dtype=float)
    keep = (depths >= lo) & (depths <= hi)
    np.maximum.at(img, (rows[keep], cols[keep]), intensities[keep])
    return img


def nmse(est: np.ndarray, ref: np.ndarray) -> float:
    ref = np.asarray(ref, dtype=float)
    den = float((ref ** 2).sum())
    if den == 0:
        raise ValueError("reference image is identically zero; NMSE undefined")
    return float(((np.asarray(est, dtype=float) - ref) ** 2).sum() / den)


def nmse_target(estimate, truth: GroundTruthScene, gate, estimate_intensities=None) -> float:
    """NMSE of the gated max-intensity image. ``estimate`` is a configuration
    (marks are log intensities) or arrays with ``estimate_intensities``."""
    shape = (truth.n_rows, truth.n_cols)
    if hasattr(estimate, "to_arrays"):
        r, c, t, m = estimate.to_arrays()
        inten = np.exp(m)
    else:
        r, c, t = estimate[:3]
        inten = estimate_intensities
    est = gated_intensity_image(r, c, t, inten, shape, gate)
    ref = gated_intensity_image(truth.rows, truth.cols, truth.depths, truth.intensities, shape, gate)
    return nmse(est, ref)


def nmse_background(b_est: np.ndarray, b_true: np.ndarray) -> float:
    return nmse(b_est, b_true)


def _sweep_cell(args) -> float:
    scene, irf, sbr, lam, seed, tau, reconstruct = args
    from .data import generate_cube
    from .scenes import rescale_scene
    if lam <= 0:
        return 0.0
    sc = rescale_scene(scene, sbr, lam)
    if sc.n_points == 0:
        return 0.0
    cube = generate_cube(sc, irf, seed=seed)
    est = reconstruct(cube, irf, seed)
    return float(detection_curves(est, sc, [tau]).f_true[0])


def sbr_sweep(scene: GroundTruthScene, irf, sbrs, photon_levels, seeds, tau: float,
              reconstruct, jobs: int = 1) -> np.ndarray:
    """Mean F_true(tau) over seeds for every (SBR, photons-per-pixel) cell.

    ``reconstruct(cube, irf, seed)`` returns an estimate accepted by
    ``detection_curves`` (it must be picklable when ``jobs > 1``). Rows follow
    ``sbrs``, columns ``photon_levels``.
    """
    cells = [(a, b, s) for a in range(len(sbrs)) for b in range(len(photon_levels)) for s in seeds]
    args = [(scene, irf, sbrs[a], photon_levels[b], s, tau, reconstruct) for a, b, s in cells]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            vals = list(ex.map(_sweep_cell, args))
    else:
        vals = [_sweep_cell(a) for a in args]
    out = np.zeros((len(sbrs), len(photon_levels)))
    for (a, b, _), v in zip(cells, vals):
        out[a, b] += v / len(seeds)
    return out
