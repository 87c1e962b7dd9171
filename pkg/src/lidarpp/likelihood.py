"""Sparse Poisson log-likelihood and exact incremental changes.

For one pixel with gain g, background b and points (t_n, r_n):

    L = sum_{z_t > 0} z_t log(g (sum_n r_n h(t - t_n) + b)) - g (sum_n r_n H_n + b T)

where H_n is the IRF mass that falls inside the cube. log(z!) is dropped.
Only stored (non-zero) bins enter the first sum.
"""
from __future__ import annotations

import math

import numpy as np

from .data import ImpulseResponse, SparseLidarCube
from .points import PointConfiguration


def _log_terms(z, rate) -> float:
    with np.errstate(divide="ignore"):
        return float(np.dot(z, np.log(rate)))


def pixel_ll_from_parts(z, sig, g, b, mass, T) -> float:
    """Evaluate L from the signal at stored bins and the in-cube signal mass."""
    rate = g * (sig + b)
    if z.size and np.any(rate <= 0):
        return -math.inf
    return _log_terms(z, rate) - g * (mass + b * T)


def point_signal(bins: np.ndarray, t: float, m: float, irf: ImpulseResponse) -> np.ndarray:
    return math.exp(m) * irf.values_at(bins - int(round(t)))


def pixel_signal(cfg: PointConfiguration, x: int, y: int, bins: np.ndarray, irf: ImpulseResponse,
                 n_bins: int):
    """(sum_n r_n h(bins - t_n), sum_n r_n H_n) for the points of one pixel."""
    sig = np.zeros(bins.size)
    mass = 0.0
    for q in cfg.pixel_points(x, y):
        p = cfg.points[q]
        sig += point_signal(bins, p.t, p.m, irf)
        mass += math.exp(p.m) * irf.mass_in_cube(int(round(p.t)), n_bins)
    return sig, mass


def pixel_log_likelihood(cube: SparseLidarCube, cfg: PointConfiguration, B: np.ndarray,
                         irf: ImpulseResponse, pixel) -> float:
    x, y = pixel
    bins, z = cube.pixel(x, y)
    sig, mass = pixel_signal(cfg, x, y, bins, irf, cube.n_bins)
    return pixel_ll_from_parts(z, sig, cube.gain[x, y], B[x, y], mass, cube.n_bins)


def cube_log_likelihood(cube: SparseLidarCube, cfg: PointConfiguration, B: np.ndarray,
                        irf: ImpulseResponse) -> float:
    total = 0.0
    for k in range(cube.n_pixels):
        total += pixel_log_likelihood(cube, cfg, B, irf, divmod(k, cube.n_cols))
    return total


def _edit_points(cfg: PointConfiguration, edit):
    """Pixel, affected depths and the pixel's (t, m) list after ``edit``."""
    kind = edit[0]
    if kind == "add":
        _, x, y, t, m = edit
        pts = [(cfg.points[q].t, cfg.points[q].m) for q in cfg.pixel_points(x, y)] + [(t, m)]
        return (x, y), [t], pts
    p = cfg.points[edit[1]]
    others = [(cfg.points[q].t, cfg.points[q].m) for q in cfg.pixel_points(p.x, p.y) if q != p.pid]
    if kind == "remove":
        return (p.x, p.y), [p.t], others
    if kind == "shift":
        return (p.x, p.y), [p.t, edit[2]], others + [(edit[2], p.m)]
    if kind == "remark":
        return (p.x, p.y), [p.t], others + [(p.t, edit[2])]
    raise ValueError(f"unknown edit {kind!r}")


def delta_point_edit(cube: SparseLidarCube, cfg: PointConfiguration, B: np.ndarray,
                     irf: ImpulseResponse, edit) -> float:
    """Change of the pixel log-likelihood for a single-point edit.

    ``edit`` is ("add", x, y, t, m), ("remove", id), ("shift", id, t_new) or
    ("remark", id, m_new). Only stored bins inside the IRF supports of the
    edited point (old and new position) are visited.
    """
    (x, y), depths, after = _edit_points(cfg, edit)
    bins, z = cube.pixel(x, y)
    lo = min(int(round(t)) for t in depths) - irf.attack
    hi = max(int(round(t)) for t in depths) + irf.decay
    a = int(np.searchsorted(bins, lo, side="left"))
    e = int(np.searchsorted(bins, hi, side="right"))
    wb, wz = bins[a:e], z[a:e]
    g, b, T = cube.gain[x, y], B[x, y], cube.n_bins
    before_sig = np.zeros(wb.size)
    before_mass = 0.0
    for q in cfg.pixel_points(x, y):
        p = cfg.points[q]
        before_sig += point_signal(wb, p.t, p.m, irf)
        before_mass += math.exp(p.m) * irf.mass_in_cube(int(round(p.t)), T)
    after_sig = np.zeros(wb.size)
    after_mass = 0.0
    for t, m in after:
        after_sig += point_signal(wb, t, m, irf)
        after_mass += math.exp(m) * irf.mass_in_cube(int(round(t)), T)
    la = _log_terms(wz, g * (after_sig + b))
    lb = _log_terms(wz, g * (before_sig + b))
    if lb == -math.inf:
        return 0.0 if la == -math.inf else math.inf
    return la - lb - g * (after_mass - before_mass)


def delta_background_edit(cube: SparseLidarCube, cfg: PointConfiguration, B: np.ndarray,
                          irf: ImpulseResponse, pixel, b_new: float) -> float:
    x, y = pixel
    bins, z = cube.pixel(x, y)
    sig, mass = pixel_signal(cfg, x, y, bins, irf, cube.n_bins)
    g, T = cube.gain[x, y], cube.n_bins
    new = pixel_ll_from_parts(z, sig, g, b_new, mass, T)
    old = pixel_ll_from_parts(z, sig, g, B[x, y], mass, T)
    if math.isinf(old) and math.isinf(new):
        return 0.0 if old == new else new
    return new - old


class PixelRates:
    """Cached signal at every stored bin and the in-cube signal mass per pixel.

    The sampler edits one pixel at a time: ``window`` locates the stored bins
    touched by a point, ``window_signal`` recomputes the signal there from the
    pixel's current points, so repeated edits never accumulate rounding.
    """

    def __init__(self, cube: SparseLidarCube, irf: ImpulseResponse):
        self.cube = cube
        self.irf = irf
        self.z = cube.counts.astype(float)
        self.sig = np.zeros(cube.bins.size)
        self.mass = np.zeros(cube.n_pixels)
        self.pix_ll = np.zeros(cube.n_pixels)

    def rebuild(self, cfg: PointConfiguration, B: np.ndarray) -> float:
        cube = self.cube
        self.sig[:] = 0.0
        self.mass[:] = 0.0
        for k in range(cube.n_pixels):
            x, y = divmod(k, cube.n_cols)
            sl = cube.pixel_slice(k)
            if cfg.pixel_points(x, y):
                self.sig[sl], self.mass[k] = pixel_signal(cfg, x, y, cube.bins[sl], self.irf, cube.n_bins)
            self.pix_ll[k] = self.evaluate(k, B.flat[k])
        return float(self.pix_ll.sum())

    def window(self, k: int, depths) -> tuple[int, int]:
        """Stored-entry range [a, e) covering the IRF supports at ``depths``."""
        sl = self.cube.pixel_slice(k)
        bins = self.cube.bins[sl]
        lo = min(int(round(t)) for t in depths) - self.irf.attack
        hi = max(int(round(t)) for t in depths) + self.irf.decay
        a = sl.start + int(np.searchsorted(bins, lo, side="left"))
        e = sl.start + int(np.searchsorted(bins, hi, side="right"))
        return a, e

    def window_signal(self, a: int, e: int, points) -> np.ndarray:
        bins = self.cube.bins[a:e]
        out = np.zeros(e - a)
        for t, m in points:
            out += point_signal(bins, t, m, self.irf)
        return out

    def signal_mass(self, points) -> float:
        T = self.cube.n_bins
        return sum(math.exp(m) * self.irf.mass_in_cube(int(round(t)), T) for t, m in points)

    def evaluate(self, k: int, b: float, a: int | None = None, e: int | None = None,
                 new_sig: np.ndarray | None = None, new_mass: float | None = None) -> float:
        """Pixel log-likelihood, optionally with the signal on [a, e) and the mass replaced."""
        sl = self.cube.pixel_slice(k)
        sig = self.sig[sl]
        if new_sig is not None:
            sig = sig.copy()
            sig[a - sl.start:e - sl.start] = new_sig
        mass = self.mass[k] if new_mass is None else new_mass
        x, y = divmod(k, self.cube.n_cols)
        return pixel_ll_from_parts(self.z[sl], sig, self.cube.gain[x, y], b, mass, self.cube.n_bins)

    def window_delta(self, k: int, b: float, a: int, e: int, new_sig: np.ndarray,
                     new_mass: float) -> float:
        """Log-likelihood change when only the signal on [a, e) and the mass change."""
        x, y = divmod(k, self.cube.n_cols)
        g = self.cube.gain[x, y]
        z = self.z[a:e]
        new_rate = g * (new_sig + b)
        if z.size and np.any(new_rate <= 0):
            return -math.inf
        d = _log_terms(z, new_rate) - _log_terms(z, g * (self.sig[a:e] + b))
        return d - g * (new_mass - self.mass[k])

    def commit(self, k: int, a: int, e: int, new_sig, new_mass: float, new_ll: float) -> None:
        if new_sig is not None:
            self.sig[a:e] = new_sig
        self.mass[k] = new_mass
        self.pix_ll[k] = new_ll
