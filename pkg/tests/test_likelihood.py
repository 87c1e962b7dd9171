import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lidarpp.data import SparseLidarCube
from lidarpp.likelihood import (PixelRates, cube_log_likelihood, delta_background_edit,
                                delta_point_edit, pixel_log_likelihood)
from lidarpp.points import PointConfiguration
from lidarpp.scenes import skewed_irf
from oracle import dense_pixel_ll, random_pixel_problem


def test_background_only_pixel():
    z = np.zeros((1, 1, 10), dtype=int)
    z[0, 0, [2, 5]] = [3, 1]
    cube = SparseLidarCube.from_dense(z, gain=[[1.5]])
    cfg = PointConfiguration(1, 1, 2, 5, 1.0)
    B = np.array([[0.2]])
    ref = 4 * math.log(1.5 * 0.2) - 1.5 * 0.2 * 10
    assert pixel_log_likelihood(cube, cfg, B, skewed_irf(2, 3), (0, 0)) == pytest.approx(ref)


@given(st.integers(0, 2 ** 31))
@settings(max_examples=200, deadline=None)
def test_sparse_equals_dense(seed):
    cube, cfg, B, irf, z, g = random_pixel_problem(np.random.default_rng(seed))
    pts = [(p.t, p.m) for p in cfg]
    ref = dense_pixel_ll(z, pts, B[0, 0], g, irf)
    assert pixel_log_likelihood(cube, cfg, B, irf, (0, 0)) == pytest.approx(ref, abs=1e-9)


def test_gain_doubling_identity():
    rng = np.random.default_rng(3)
    cube, cfg, B, irf, z, g = random_pixel_problem(rng, T=60)
    cube2 = SparseLidarCube(1, 1, 60, cube.offsets, cube.bins, cube.counts, gain=[[2 * g]])
    l1 = pixel_log_likelihood(cube, cfg, B, irf, (0, 0))
    l2 = pixel_log_likelihood(cube2, cfg, B, irf, (0, 0))
    sig_mass = sum(math.exp(p.m) * irf.mass_in_cube(int(round(p.t)), 60) for p in cfg)
    linear = g * (sig_mass + B[0, 0] * 60)
    assert l2 - l1 == pytest.approx(z.sum() * math.log(2) - linear, abs=1e-9)


def apply_edit(cfg, edit):
    out = cfg.copy()
    if edit[0] == "add":
        out.insert(*edit[1:])
    elif edit[0] == "remove":
        out.remove(edit[1])
    elif edit[0] == "shift":
        out.shift(edit[1], edit[2])
    else:
        out.set_mark(edit[1], edit[2])
    return out


@given(st.integers(0, 2 ** 31))
@settings(max_examples=200, deadline=None)
def test_point_edit_delta_matches_recompute(seed):
    rng = np.random.default_rng(seed)
    cube, cfg, B, irf, z, g = random_pixel_problem(rng)
    T = cube.n_bins
    ids = sorted(cfg.points)
    kind = ["add", "remove", "shift", "remark"][int(rng.integers(4))] if ids else "add"
    if kind == "add":
        t = float(rng.uniform(0, T - 1))
        if not cfg.can_place(0, 0, t):
            return
        edit = ("add", 0, 0, t, float(rng.normal()))
    elif kind == "remove":
        edit = ("remove", ids[rng.integers(len(ids))])
    elif kind == "shift":
        q = ids[rng.integers(len(ids))]
        t = float(np.clip(cfg.points[q].t + rng.normal(0, 5), 0, T - 1))
        if not cfg.can_place(0, 0, t, ignore=(q,)):
            return
        edit = ("shift", q, t)
    else:
        edit = ("remark", ids[rng.integers(len(ids))], float(rng.normal()))
    before = pixel_log_likelihood(cube, cfg, B, irf, (0, 0))
    after = pixel_log_likelihood(cube, apply_edit(cfg, edit), B, irf, (0, 0))
    assert delta_point_edit(cube, cfg, B, irf, edit) == pytest.approx(after - before, abs=1e-9)


def test_zero_intensity_add_and_far_shift():
    z = np.zeros((1, 1, 200), dtype=int)
    z[0, 0, 20:30] = 2
    cube = SparseLidarCube.from_dense(z)
    irf = skewed_irf(2, 5)
    cfg = PointConfiguration(1, 1, 2, 5, 1.0, 200)
    B = np.array([[0.1]])
    assert delta_point_edit(cube, cfg, B, irf, ("add", 0, 0, 25.0, -math.inf)) == 0.0
    q = cfg.insert(0, 0, 100.0, 0.0)
    # neither position covers a stored bin and both keep the full IRF mass in the cube
    assert delta_point_edit(cube, cfg, B, irf, ("shift", q, 150.0)) == pytest.approx(0.0, abs=1e-15)


def test_background_edit_examples():
    rng = np.random.default_rng(0)
    cube, cfg, B, irf, z, g = random_pixel_problem(rng)
    assert delta_background_edit(cube, cfg, B, irf, (0, 0), B[0, 0]) == 0.0
    empty = SparseLidarCube.from_dense(np.zeros((1, 1, 40), dtype=int), gain=[[1.7]])
    e = PointConfiguration(1, 1, 2, 5, 1.0)
    assert delta_background_edit(empty, e, B, irf, (0, 0), 0.3) == pytest.approx(-1.7 * 40 * (0.3 - B[0, 0]))
    for _ in range(100):
        cube, cfg, B, irf, z, g = random_pixel_problem(rng)
        b2 = float(rng.uniform(0.01, 0.5))
        B2 = np.array([[b2]])
        ref = pixel_log_likelihood(cube, cfg, B2, irf, (0, 0)) - pixel_log_likelihood(cube, cfg, B, irf, (0, 0))
        assert delta_background_edit(cube, cfg, B, irf, (0, 0), b2) == pytest.approx(ref, abs=1e-9)


def test_pixel_rates_cache_matches_cube_likelihood():
    rng = np.random.default_rng(2)
    irf = skewed_irf(3, 8)
    z = rng.poisson(0.3, size=(4, 5, 60))
    cube = SparseLidarCube.from_dense(z)
    cfg = PointConfiguration(4, 5, 2, 5, 1.0, 60)
    for _ in range(20):
        x, y, t = int(rng.integers(4)), int(rng.integers(5)), float(rng.uniform(0, 59))
        if cfg.can_place(x, y, t):
            cfg.insert(x, y, t, float(rng.normal()))
    B = rng.uniform(0.05, 0.3, size=(4, 5))
    rates = PixelRates(cube, irf)
    assert rates.rebuild(cfg, B) == pytest.approx(cube_log_likelihood(cube, cfg, B, irf), abs=1e-9)
