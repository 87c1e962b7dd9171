"""Photon-count cubes, the instrument response, synthetic generation and the
log-matched filter.

Indices are 0-based in memory: pixel (i, j) with 0 <= i < n_rows, bins
0 <= t < n_bins. Point depths are continuous; rates are evaluated at integer
offsets ``bin - round(t)`` so that the IRF peak lands on ``round(t)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SUPPORT_EPS = 1e-6   # relative negligibility threshold for the IRF support


class ImpulseResponse:
    """Sampled instrument response trimmed to its epsilon-support.

    ``samples[attack]`` is the maximum; a point at depth t illuminates bins
    ``round(t) - attack .. round(t) + decay``.
    """

    def __init__(self, samples, eps_rel: float = SUPPORT_EPS):
        h = np.asarray(samples, dtype=float).ravel()
        if h.size == 0 or np.any(h < 0) or not np.all(np.isfinite(h)):
            raise ValueError("impulse response samples must be finite and non-negative")
        peak = int(np.argmax(h))
        if h[peak] <= 0:
            raise ValueError("impulse response must have a positive maximum")
        self.eps = eps_rel * h[peak]
        above = np.flatnonzero(h > self.eps)
        lo, hi = int(above[0]), int(above[-1])
        self.samples = h[lo:hi + 1].copy()
        self.attack = peak - lo
        self.decay = hi - peak
        self.total_sum = float(self.samples.sum())
        self._cumsum = np.concatenate(([0.0], np.cumsum(self.samples)))
        # log weights relative to the negligibility floor, >= 0 on the support
        with np.errstate(divide="ignore"):
            self.log_weights = np.log(np.maximum(self.samples, self.eps) / self.eps)
        self.log_samples = np.log(np.where(self.samples > self.eps, self.samples, np.nan))

    def __len__(self):
        return self.samples.size

    @property
    def extent(self) -> int:
        """attack + decay, the maximal spread of one return in bins."""
        return self.attack + self.decay

    def values_at(self, offsets) -> np.ndarray:
        """h at integer offsets relative to the peak; zero outside the support."""
        idx = np.asarray(offsets) + self.attack
        ok = (idx >= 0) & (idx < self.samples.size)
        out = np.zeros(idx.shape, dtype=float)
        out[ok] = self.samples[idx[ok]]
        return out

    def mass_in_cube(self, center: int, n_bins: int) -> float:
        """Sum of h over the bins of [0, n_bins) for a peak at ``center``."""
        lo = max(0, self.attack - center)
        hi = min(self.samples.size, n_bins - center + self.attack)
        if hi <= lo:
            return 0.0
        return float(self._cumsum[hi] - self._cumsum[lo])

    def scaled(self, factor: float) -> "ImpulseResponse":
        out = ImpulseResponse.__new__(ImpulseResponse)
        out.eps = self.eps * factor
        out.samples = self.samples * factor
        out.attack, out.decay = self.attack, self.decay
        out.total_sum = float(out.samples.sum())
        out._cumsum = np.concatenate(([0.0], np.cumsum(out.samples)))
        out.log_weights = self.log_weights.copy()
        with np.errstate(invalid="ignore"):
            out.log_samples = self.log_samples + np.log(factor)
        return out


@dataclass
class SparseLidarCube:
    """Histograms stored as CSR over pixels: entries of pixel k = i*n_cols + j
    live in ``bins[offsets[k]:offsets[k+1]]`` (strictly increasing) with
    positive ``counts``."""

    n_rows: int
    n_cols: int
    n_bins: int
    offsets: np.ndarray
    bins: np.ndarray
    counts: np.ndarray
    gain: np.ndarray = None
    bin_width: float = 1.0
    pixel_pitch: float = 1.0

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.int64)
        self.bins = np.asarray(self.bins, dtype=np.int64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.gain is None:
            self.gain = np.ones((self.n_rows, self.n_cols))
        self.gain = np.asarray(self.gain, dtype=float).reshape(self.n_rows, self.n_cols)
        self.validate()

    def validate(self):
        P = self.n_rows * self.n_cols
        if min(self.n_rows, self.n_cols, self.n_bins) < 1:
            raise ValueError("cube dimensions must be positive")
        if self.offsets.shape != (P + 1,) or self.offsets[0] != 0 or self.offsets[-1] != self.bins.size:
            raise ValueError("offsets do not describe the stored entries")
        if self.bins.shape != self.counts.shape:
            raise ValueError("bins and counts differ in length")
        if np.any(np.diff(self.offsets) < 0):
            raise ValueError("offsets must be non-decreasing")
        if self.counts.size and (self.counts.min() < 1):
            raise ValueError("zero counts must not be stored")
        if self.bins.size and (self.bins.min() < 0 or self.bins.max() >= self.n_bins):
            raise ValueError("bin index out of range")
        d = np.diff(self.bins)
        first = np.zeros(self.bins.size, dtype=bool)
        starts = self.offsets[:-1][np.diff(self.offsets) > 0]
        first[starts] = True
        if d.size and np.any((d <= 0) & ~first[1:]):
            raise ValueError("bins must be strictly increasing within a pixel")
        if np.any(self.gain <= 0):
            raise ValueError("gains must be positive")

    @property
    def n_pixels(self) -> int:
        return self.n_rows * self.n_cols

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_rows, self.n_cols, self.n_bins)

    def pixel_slice(self, k: int) -> slice:
        return slice(int(self.offsets[k]), int(self.offsets[k + 1]))

    def pixel(self, i: int, j: int) -> tuple[np.ndarray, np.ndarray]:
        sl = self.pixel_slice(i * self.n_cols + j)
        return self.bins[sl], self.counts[sl]

    def total_photons(self) -> int:
        return int(self.counts.sum())

    def photons_per_pixel(self) -> np.ndarray:
        csum = np.concatenate(([0], np.cumsum(self.counts)))
        return (csum[self.offsets[1:]] - csum[self.offsets[:-1]]).reshape(self.n_rows, self.n_cols)

    def pixel_ids(self) -> np.ndarray:
        """Pixel index of every stored entry."""
        return np.repeat(np.arange(self.n_pixels), np.diff(self.offsets))

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n_pixels, self.n_bins), dtype=np.int64)
        out[self.pixel_ids(), self.bins] = self.counts
        return out.reshape(self.n_rows, self.n_cols, self.n_bins)

    @classmethod
    def from_dense(cls, z, gain=None, bin_width=1.0, pixel_pitch=1.0) -> "SparseLidarCube":
        z = np.asarray(z)
        nr, nc, T = z.shape
        flat = z.reshape(nr * nc, T)
        k, t = np.nonzero(flat)
        offsets = np.concatenate(([0], np.cumsum(np.bincount(k, minlength=nr * nc))))
        return cls(nr, nc, T, offsets, t, flat[k, t], gain, bin_width, pixel_pitch)

    @classmethod
    def from_entries(cls, n_rows, n_cols, n_bins, pix, bins, counts, gain=None,
                     bin_width=1.0, pixel_pitch=1.0) -> "SparseLidarCube":
        """Build from unsorted (pixel, bin, count) triplets; duplicates are summed."""
        pix = np.asarray(pix, dtype=np.int64)
        bins = np.asarray(bins, dtype=np.int64)
        counts = np.asarray(counts, dtype=np.int64)
        keep = counts > 0
        pix, bins, counts = pix[keep], bins[keep], counts[keep]
        key = pix * n_bins + bins
        uniq, inv = np.unique(key, return_inverse=True)
        summed = np.bincount(inv, weights=counts).astype(np.int64)
        upix = uniq // n_bins
        offsets = np.concatenate(([0], np.cumsum(np.bincount(upix, minlength=n_rows * n_cols))))
        return cls(n_rows, n_cols, n_bins, offsets, uniq % n_bins, summed, gain, bin_width, pixel_pitch)


@dataclass
class GroundTruthScene:
    """Point returns (row, col, depth in bins, intensity, surface label) and a
    background rate per pixel (expected background photons per bin at unit gain)."""

    n_rows: int
    n_cols: int
    n_bins: int
    rows: np.ndarray
    cols: np.ndarray
    depths: np.ndarray
    intensities: np.ndarray
    background: np.ndarray
    surfaces: np.ndarray = None
    bin_width: float = 1.0
    pixel_pitch: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.int64)
        self.cols = np.asarray(self.cols, dtype=np.int64)
        self.depths = np.asarray(self.depths, dtype=float)
        self.intensities = np.asarray(self.intensities, dtype=float)
        self.background = np.asarray(self.background, dtype=float).reshape(self.n_rows, self.n_cols)
        if self.surfaces is None:
            self.surfaces = np.zeros(self.rows.size, dtype=np.int64)
        self.surfaces = np.asarray(self.surfaces, dtype=np.int64)
        if np.any(self.intensities <= 0):
            raise ValueError("ground-truth intensities must be positive")
        if np.any(self.background < 0):
            raise ValueError("background must be non-negative")

    @property
    def n_points(self) -> int:
        return int(self.rows.size)


def generate_cube(scene: GroundTruthScene, irf: ImpulseResponse, gain=None, seed=None,
                  n_bins: int | None = None) -> SparseLidarCube:
    """Draw Poisson counts with rate g*(sum_n r_n h(t - t_n) + b) per bin."""
    T = scene.n_bins if n_bins is None else int(n_bins)
    nr, nc = scene.n_rows, scene.n_cols
    g = np.ones((nr, nc)) if gain is None else np.asarray(gain, dtype=float).reshape(nr, nc)
    bad = (scene.depths < 0) | (scene.depths > T - 1) | (scene.rows < 0) | (scene.rows >= nr) \
        | (scene.cols < 0) | (scene.cols >= nc)
    if np.any(bad):
        n = int(np.flatnonzero(bad)[0])
        raise ValueError(f"scene point {n} at ({scene.rows[n]}, {scene.cols[n]}, t={scene.depths[n]}) "
                         f"lies outside the {nr}x{nc}x{T} cube")
    rng = np.random.default_rng(seed)
    offs = np.arange(-irf.attack, irf.decay + 1)
    pix_l, bin_l, cnt_l = [], [], []
    order = np.lexsort((scene.depths, scene.cols, scene.rows))
    by_pixel: dict[int, list[int]] = {}
    for n in order:
        by_pixel.setdefault(int(scene.rows[n] * nc + scene.cols[n]), []).append(int(n))
    for k in range(nr * nc):
        i, j = divmod(k, nc)
        gk = g[i, j]
        for n in by_pixel.get(k, ()):
            b = int(np.rint(scene.depths[n])) + offs
            ok = (b >= 0) & (b < T)
            z = rng.poisson(gk * scene.intensities[n] * irf.samples[ok])
            nz = z > 0
            pix_l.append(np.full(nz.sum(), k))
            bin_l.append(b[ok][nz])
            cnt_l.append(z[nz])
        lam = gk * scene.background[i, j] * T
        n_bg = rng.poisson(lam) if lam > 0 else 0
        if n_bg:
            t = rng.integers(0, T, size=n_bg)
            pix_l.append(np.full(n_bg, k))
            bin_l.append(t)
            cnt_l.append(np.ones(n_bg, dtype=np.int64))
    cat = (lambda xs: np.concatenate(xs) if xs else np.zeros(0, dtype=np.int64))
    return SparseLidarCube.from_entries(nr, nc, T, cat(pix_l), cat(bin_l), cat(cnt_l), g,
                                        scene.bin_width, scene.pixel_pitch)


def bin_cube(cube: SparseLidarCube, window: int) -> SparseLidarCube:
    """Sum histograms over window x window pixel blocks; edge blocks may be partial."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if window == 1:
        return SparseLidarCube(cube.n_rows, cube.n_cols, cube.n_bins, cube.offsets.copy(),
                               cube.bins.copy(), cube.counts.copy(), cube.gain.copy(),
                               cube.bin_width, cube.pixel_pitch)
    nr = -(-cube.n_rows // window)
    nc = -(-cube.n_cols // window)
    k = cube.pixel_ids()
    i, j = np.divmod(k, cube.n_cols)
    newk = (i // window) * nc + (j // window)
    # gain averaged over the cells that exist in each block
    gi, gj = np.divmod(np.arange(cube.n_pixels), cube.n_cols)
    gk = (gi // window) * nc + (gj // window)
    gsum = np.bincount(gk, weights=cube.gain.ravel(), minlength=nr * nc)
    gcnt = np.bincount(gk, minlength=nr * nc)
    return SparseLidarCube.from_entries(nr, nc, cube.n_bins, newk, cube.bins, cube.counts,
                                        (gsum / gcnt).reshape(nr, nc), cube.bin_width,
                                        cube.pixel_pitch * window)


def matched_filter_scores(bins: np.ndarray, counts: np.ndarray, irf: ImpulseResponse,
                          n_bins: int) -> np.ndarray:
    """Log-matched score S(t0) = sum_t z_t log(h(t - t0)/eps) for every t0.

    With h floored at eps outside its support this is the usual log-matched
    filter up to the constant (sum z) log eps.
    """
    score = np.zeros(n_bins)
    w_rev = irf.log_weights[::-1]
    for b, z in zip(bins.tolist(), counts.tolist()):
        lo = b - irf.decay
        hi = b + irf.attack + 1
        a = max(lo, 0)
        e = min(hi, n_bins)
        if e > a:
            score[a:e] += z * w_rev[a - lo:e - lo]
    return score


@dataclass
class MatchedFilterResult:
    depth: np.ndarray        # argmax bin, NaN for empty pixels
    intensity: np.ndarray    # corrected intensity max(r~ - b^, 0)
    raw_intensity: np.ndarray
    background: np.ndarray   # photons per bin per unit gain
    empty: np.ndarray        # bool mask of pixels without photons


def log_matched_filter(cube: SparseLidarCube, irf: ImpulseResponse) -> MatchedFilterResult:
    """Per-pixel depth, intensity and background by log-matched filtering."""
    nr, nc, T = cube.shape
    depth = np.full(cube.n_pixels, np.nan)
    r_raw = np.zeros(cube.n_pixels)
    r_hat = np.zeros(cube.n_pixels)
    b_hat = np.zeros(cube.n_pixels)
    empty = np.zeros(cube.n_pixels, dtype=bool)
    for k in range(cube.n_pixels):
        sl = cube.pixel_slice(k)
        bins, counts = cube.bins[sl], cube.counts[sl]
        if bins.size == 0:
            empty[k] = True
            continue
        g = cube.gain.flat[k]
        s = matched_filter_scores(bins, counts, irf, T)
        t0 = int(np.argmax(s))
        lo, hi = t0 - irf.attack, t0 + irf.decay
        inside = (bins >= lo) & (bins <= hi)
        n_in = counts[inside].sum()
        n_out = counts[~inside].sum()
        width_out = T - (min(hi, T - 1) - max(lo, 0) + 1)
        depth[k] = t0
        b_hat[k] = n_out / (g * width_out) if width_out > 0 else 0.0
        r_raw[k] = n_in / (g * irf.mass_in_cube(t0, T))
        # subtract the background photons expected inside the window, in intensity units
        r_hat[k] = max(r_raw[k] - b_hat[k] * (T - width_out) / irf.mass_in_cube(t0, T), 0.0)
    shp = (nr, nc)
    return MatchedFilterResult(depth.reshape(shp), r_hat.reshape(shp), r_raw.reshape(shp),
                               b_hat.reshape(shp), empty.reshape(shp))
