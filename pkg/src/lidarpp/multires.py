"""Coarse-to-fine driver: threshold the prior support on the coarsest cube,
run the sampler per scale and hand estimates from one scale to the next."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .config import HyperParameters, MoveTable, SamplerOptions, ScaleSchedule
from .data import ImpulseResponse, SparseLidarCube, bin_cube, matched_filter_scores
from .points import PointConfiguration, upsample
from .sampler import RunResult, Sampler
from .support import AdmissibleSupport, merge_intervals


def threshold_support(cube: SparseLidarCube, irf: ImpulseResponse, n_sigma: float = 0.5,
                      margin: int | None = None) -> AdmissibleSupport:
    """Keep depths where the log-matched response exceeds its background-only
    mean by ``n_sigma`` standard deviations.

    Under uniform background with the pixel's photon count spread over T bins,
    the response has mean rho * sum(w) and variance rho * sum(w^2), with
    rho = sum(z) / T and w = log(h / eps). Passing depths are dilated by
    ``margin`` bins (default attack + decay). Pixels without photons get an
    empty support.
    """
    margin = irf.extent if margin is None else margin
    T = cube.n_bins
    w = irf.log_weights
    w1, w2 = float(w.sum()), float((w ** 2).sum())
    out = {}
    for k in range(cube.n_pixels):
        sl = cube.pixel_slice(k)
        bins, z = cube.bins[sl], cube.counts[sl]
        if bins.size == 0:
            continue
        score = matched_filter_scores(bins, z, irf, T)
        rho = z.sum() / T
        ok = np.flatnonzero(score >= rho * w1 + n_sigma * math.sqrt(rho * w2))
        if ok.size == 0:
            continue
        # runs of consecutive passing bins, then dilate each run
        breaks = np.flatnonzero(np.diff(ok) > 1)
        starts = np.concatenate(([ok[0]], ok[breaks + 1]))
        ends = np.concatenate((ok[breaks], [ok[-1]]))
        out[k] = merge_intervals([(s - margin, e + margin) for s, e in zip(starts, ends)])
    return AdmissibleSupport(cube.n_rows, cube.n_cols, T, out)


def scaled_irf(irf: ImpulseResponse, cube: SparseLidarCube) -> ImpulseResponse:
    """Rescale h so that intensities of a typical return are of order one to ten."""
    lam = max(cube.total_photons() / cube.n_pixels, 1e-12)
    return irf.scaled(lam / (5.0 * irf.total_sum))


@dataclass
class ScaleResult:
    window: int
    cube: SparseLidarCube
    irf: ImpulseResponse
    hyper: HyperParameters
    support: AdmissibleSupport
    run: RunResult
    seconds: float
    to_input_units: float   # log factor converting marks to the input IRF units


@dataclass
class MultiscaleResult:
    config: PointConfiguration      # finest MAP estimate, marks in input IRF units
    background: np.ndarray          # finest MMSE background
    scales: list[ScaleResult] = field(default_factory=list)
    support: AdmissibleSupport | None = None

    @property
    def acceptance(self) -> dict:
        return self.scales[-1].run.acceptance


def run_multiscale(cube: SparseLidarCube, irf: ImpulseResponse,
                   schedule: ScaleSchedule | None = None, moves: MoveTable | None = None,
                   options: SamplerOptions | None = None, seed=0,
                   overrides: dict[int, dict] | None = None,
                   iterations: dict[int, int] | None = None,
                   callback=None) -> MultiscaleResult:
    """Run the sampler from the coarsest to the finest window of ``schedule``.

    ``overrides`` maps a scale index to HyperParameters overrides; by default
    the last scale uses the fine-scale constants and all others the coarse ones.
    ``iterations`` maps a scale index to an absolute iteration count. Scales
    without an entry run ``options.n_iter`` iterations, or, when that is unset,
    ``options.iters_per_pixel`` times the pixel count of the input cube, so
    every scale gets the same budget.
    """
    schedule = schedule or ScaleSchedule()
    moves = moves or MoveTable()
    options = options or SamplerOptions()
    overrides = overrides or {}
    iterations = iterations or {}
    K = len(schedule.windows)
    seeds = np.random.SeedSequence(seed).spawn(K)
    w0 = schedule.windows[0]
    coarse0 = bin_cube(cube, w0)
    if schedule.use_threshold:
        support0 = threshold_support(coarse0, irf, schedule.threshold_sigma)
    else:
        support0 = AdmissibleSupport.full(coarse0.n_rows, coarse0.n_cols, cube.n_bins)

    results: list[ScaleResult] = []
    cfg0, b0 = None, None
    for s, w in enumerate(schedule.windows):
        zc = coarse0 if s == 0 else bin_cube(cube, w)
        support = support0 if s == 0 else support0.upsample(w0 // w, zc.n_rows, zc.n_cols)
        h_s = scaled_irf(irf, zc)
        hyper = HyperParameters.for_scale(zc.n_rows, zc.n_cols, w, cube.bin_width, cube.pixel_pitch,
                                          fine=(s == K - 1), **overrides.get(s, {}))
        if s > 0:
            prev = results[-1]
            f = prev.window // w
            shift = math.log(prev.irf.total_sum / h_s.total_sum) - 2 * math.log(f)
            cfg0 = upsample(prev.run.map_config, f, zc.n_rows, zc.n_cols, hyper.n_b,
                            hyper.hard_core, hyper.l_z, zc.n_bins, log_intensity_shift=shift)
            cfg0 = _restrict(cfg0, support)
            bprev = prev.run.background
            b0 = np.repeat(np.repeat(bprev, f, axis=0), f, axis=1)[:zc.n_rows, :zc.n_cols] / f ** 2
        rng = np.random.default_rng(seeds[s])
        t0 = time.perf_counter()
        smp = Sampler(zc, h_s, hyper, moves, options, support=support, init_config=cfg0,
                      init_background=b0, rng=rng)
        n_iter = iterations.get(s, options.n_iter)
        if n_iter is None:
            n_iter = int(round(options.iters_per_pixel * cube.n_pixels))
        run = smp.run(n_iter, callback=callback)
        if run.background is None:
            raise RuntimeError(f"scale {s}: no post-burn-in background sweeps; increase the iterations")
        results.append(ScaleResult(w, zc, h_s, hyper, support, run, time.perf_counter() - t0,
                                   math.log(h_s.total_sum / irf.total_sum)))
    last = results[-1]
    final = last.run.map_config.copy()
    for p in final:
        p.m += last.to_input_units
    return MultiscaleResult(final, last.run.background, results, support0)


def _restrict(cfg: PointConfiguration, support: AdmissibleSupport) -> PointConfiguration:
    """Drop points outside the admissible support."""
    out = cfg.copy()
    for p in list(out):
        if not support.contains(p.x * out.n_cols + p.y, p.t):
            out.remove(p.pid)
    return out
