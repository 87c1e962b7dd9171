"""Admissible support of the point-process reference measure.

Per pixel, a sorted list of disjoint closed depth intervals. The reference
measure is uniform on the union with total mass one, so birth proposals draw
uniformly from it and target ratios of moves that add a point through a
Lebesgue-density proposal pick up a 1/measure factor.
"""
from __future__ import annotations

import numpy as np


def merge_intervals(ivs):
    out = []
    for lo, hi in sorted(ivs):
        if out and lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return [(float(a), float(b)) for a, b in out]


class AdmissibleSupport:
    def __init__(self, n_rows: int, n_cols: int, n_bins: int, intervals: dict[int, list] | None = None):
        self.n_rows, self.n_cols, self.n_bins = n_rows, n_cols, n_bins
        t_max = float(n_bins - 1)
        if intervals is None:
            intervals = {k: [(0.0, t_max)] for k in range(n_rows * n_cols)}
        self.intervals: dict[int, list[tuple[float, float]]] = {}
        for k in sorted(intervals):
            ivs = [(max(0.0, lo), min(t_max, hi)) for lo, hi in intervals[k]]
            ivs = [iv for iv in merge_intervals(ivs) if iv[1] > iv[0]]
            if ivs:
                self.intervals[k] = ivs
        pix, lo, hi = [], [], []
        for k, ivs in self.intervals.items():
            for a, b in ivs:
                pix.append(k); lo.append(a); hi.append(b)
        self._pix = np.array(pix, dtype=np.int64)
        self._lo = np.array(lo, dtype=float)
        self._hi = np.array(hi, dtype=float)
        self._cum = np.cumsum(self._hi - self._lo)
        self.measure = float(self._cum[-1]) if self._cum.size else 0.0

    @classmethod
    def full(cls, n_rows: int, n_cols: int, n_bins: int) -> "AdmissibleSupport":
        return cls(n_rows, n_cols, n_bins)

    @property
    def is_full(self) -> bool:
        return self.measure == self.n_rows * self.n_cols * float(self.n_bins - 1)

    def contains(self, k: int, t: float) -> bool:
        for lo, hi in self.intervals.get(k, ()):
            if lo <= t <= hi:
                return True
            if t < lo:
                break
        return False

    def sample(self, rng: np.random.Generator) -> tuple[int, float]:
        v = rng.random() * self.measure
        idx = int(np.searchsorted(self._cum, v, side="right"))
        idx = min(idx, self._cum.size - 1)
        start = self._cum[idx - 1] if idx > 0 else 0.0
        t = min(self._lo[idx] + (v - start), self._hi[idx])
        return int(self._pix[idx]), float(t)

    def pixel_measure(self) -> np.ndarray:
        out = np.zeros(self.n_rows * self.n_cols)
        np.add.at(out, self._pix, self._hi - self._lo)
        return out.reshape(self.n_rows, self.n_cols)

    def upsample(self, factor: int, n_rows: int, n_cols: int) -> "AdmissibleSupport":
        """Fine-pixel support inheriting the intervals of the parent coarse pixel."""
        out = {}
        for k in range(n_rows * n_cols):
            i, j = divmod(k, n_cols)
            ck = (i // factor) * self.n_cols + (j // factor)
            if ck in self.intervals:
                out[k] = list(self.intervals[ck])
        return AdmissibleSupport(n_rows, n_cols, self.n_bins, out)
