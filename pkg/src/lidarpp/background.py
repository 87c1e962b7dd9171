"""Gamma-MRF background field and its data-augmented Gibbs sweep.

Background b and auxiliary w live on the same grid. w_n is coupled to the b
values of its neighbourhood M(w_n) (itself plus in-grid 4-neighbours) with
weight alpha / |M(w_n)|, which gives the conditionals

    w_n | B ~ InvGamma(alpha, alpha * wbar_n),    wbar_n = mean of b over M(w_n)
    b_k | W ~ Gamma(alpha, rate alpha / bbar_k),  1/bbar_k = sum_{n in M(b_k)} 1/(|M(w_n)| w_n)
"""
from __future__ import annotations

import numpy as np

from .likelihood import PixelRates
from .priors import neighbourhood_sizes, neighbourhood_sums


class BackgroundField:
    def __init__(self, B: np.ndarray, alpha: float, W: np.ndarray | None = None):
        self.B = np.asarray(B, dtype=float).copy()
        if np.any(self.B <= 0):
            raise ValueError("background levels must be positive")
        self.alpha = float(alpha)
        self.sizes = neighbourhood_sizes(self.B.shape)
        self.W = self.w_bar() if W is None else np.asarray(W, dtype=float).copy()
        self.acc_sum = np.zeros_like(self.B)
        self.acc_count = 0

    @classmethod
    def random(cls, shape, alpha: float, rng: np.random.Generator, low=1e-3, high=1e-2):
        return cls(rng.uniform(low, high, size=shape), alpha)

    def copy(self) -> "BackgroundField":
        out = BackgroundField(self.B, self.alpha, self.W)
        out.acc_sum = self.acc_sum.copy()
        out.acc_count = self.acc_count
        return out

    def w_bar(self) -> np.ndarray:
        return neighbourhood_sums(self.B) / self.sizes

    def b_bar(self) -> np.ndarray:
        return 1.0 / neighbourhood_sums(1.0 / (self.sizes * self.W))

    def accumulate(self) -> None:
        self.acc_sum += self.B
        self.acc_count += 1

    def estimate(self) -> np.ndarray:
        """Posterior-mean estimate over the accumulated sweeps."""
        if self.acc_count == 0:
            raise RuntimeError("no background samples accumulated")
        return self.acc_sum / self.acc_count


def mmse_accumulate(field: BackgroundField) -> None:
    field.accumulate()


def mmse_estimate(field: BackgroundField) -> np.ndarray:
    return field.estimate()


def thin_counts(rates: PixelRates, B: np.ndarray, rng: np.random.Generator,
                poisson_threshold: int = 100) -> np.ndarray:
    """Draw the number of background photons per pixel.

    Each stored count is split binomially with probability b / (signal + b);
    bins without signal keep all their photons. Pixels whose covered bins hold
    more than ``poisson_threshold`` photons use a single Poisson draw with the
    same mean instead of per-bin binomials.
    """
    cube = rates.cube
    z = cube.counts
    b_entry = np.repeat(B.ravel(), np.diff(cube.offsets))
    covered = rates.sig > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(covered, b_entry / (rates.sig + b_entry), 1.0)
    pix = cube.pixel_ids()
    cov_counts = np.bincount(pix[covered], weights=z[covered], minlength=cube.n_pixels)
    heavy = cov_counts > poisson_threshold
    exact = covered & ~heavy[pix]
    out = np.bincount(pix[~covered], weights=z[~covered], minlength=cube.n_pixels)
    if exact.any():
        draws = rng.binomial(z[exact], p[exact])
        out += np.bincount(pix[exact], weights=draws, minlength=cube.n_pixels)
    if heavy.any():
        approx = covered & heavy[pix]
        mean = np.bincount(pix[approx], weights=z[approx] * p[approx], minlength=cube.n_pixels)
        out[heavy] += rng.poisson(mean[heavy])
    return out.reshape(B.shape)


def gibbs_sweep(rates: PixelRates, field: BackgroundField, rng: np.random.Generator,
                poisson_threshold: int = 100) -> np.ndarray:
    """One pass of thinning, W | B and B | W, thinned counts. Returns the new B."""
    cube = rates.cube
    a = field.alpha
    z_bg = thin_counts(rates, field.B, rng, poisson_threshold)
    field.W = a * field.w_bar() / rng.gamma(a, 1.0, size=field.B.shape)
    rate = cube.gain * cube.n_bins + a / field.b_bar()
    field.B = rng.gamma(a + z_bg, 1.0 / rate)
    # guard against underflow to exactly zero
    np.maximum(field.B, np.finfo(float).tiny, out=field.B)
    return field.B
