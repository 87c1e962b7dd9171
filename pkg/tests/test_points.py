import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lidarpp.points import (HardCoreViolation, PointConfiguration, configuration_from_arrays,
                            point_distance, upsample)


def brute_adjacency(cfg):
    adj = {p.pid: set() for p in cfg}
    for a in cfg:
        for b in cfg:
            if a.pid != b.pid and max(abs(a.x - b.x), abs(a.y - b.y)) == 1 and abs(a.t - b.t) <= cfg.n_b:
                adj[a.pid].add(b.pid)
    return adj


def brute_components(cfg):
    adj = brute_adjacency(cfg)
    lab = {}
    for s in sorted(adj):
        if s in lab:
            continue
        stack = [s]
        lab[s] = s
        while stack:
            q = stack.pop()
            for r in adj[q]:
                if r not in lab:
                    lab[r] = s
                    stack.append(r)
    return lab


def random_config(rng, n=50, nr=6, nc=6, T=80, n_b=3, d_min=7):
    cfg = PointConfiguration(nr, nc, n_b, d_min, 1.5, T)
    while len(cfg) < n:
        x, y, t = int(rng.integers(nr)), int(rng.integers(nc)), float(rng.uniform(0, T - 1))
        if cfg.can_place(x, y, t):
            cfg.insert(x, y, t, float(rng.normal()))
    return cfg


def check_structure(cfg):
    assert cfg.adj == brute_adjacency(cfg)
    for q, nb in cfg.adj.items():
        assert len(nb) <= 8
        for r in nb:
            assert q in cfg.adj[r]
    for ids in cfg.pixels.values():
        ts = [cfg.points[q].t for q in ids]
        assert ts == sorted(ts)
        assert all(b - a >= cfg.d_min for a, b in zip(ts, ts[1:]))
    assert cfg.surface_labels() == brute_components(cfg)


def test_insert_into_empty_and_adjacent_pair():
    cfg = PointConfiguration(3, 3, 4, 9, 1.0)
    a = cfg.insert(1, 1, 20.0, 0.0)
    assert cfg.adj[a] == set()
    b = cfg.insert(1, 2, 24.0, 0.0)
    assert cfg.adj[a] == {b} and cfg.adj[b] == {a}
    c = cfg.insert(0, 0, 25.0, 0.0)       # |dt| = 5 > n_b from a
    assert c not in cfg.adj[a]


def test_hard_core_enforced():
    cfg = PointConfiguration(2, 2, 2, 5, 1.0)
    cfg.insert(0, 0, 10.0, 0.0)
    with pytest.raises(HardCoreViolation):
        cfg.insert(0, 0, 14.0, 0.0)
    cfg.insert(0, 0, 15.0, 0.0)


@given(st.integers(0, 2 ** 31))
@settings(max_examples=30, deadline=None)
def test_adjacency_matches_all_pairs_oracle(seed):
    check_structure(random_config(np.random.default_rng(seed)))


@given(st.integers(0, 2 ** 31))
@settings(max_examples=20, deadline=None)
def test_random_edits_match_rebuild(seed):
    rng = np.random.default_rng(seed)
    cfg = random_config(rng, n=30)
    for _ in range(100):
        ids = sorted(cfg.points)
        op = rng.integers(4)
        if op == 0 and ids:
            cfg.remove(ids[rng.integers(len(ids))])
        elif op == 1 and ids:
            q = ids[rng.integers(len(ids))]
            t = float(np.clip(cfg.points[q].t + rng.normal(0, 4), 0, 79))
            if cfg.can_place(cfg.points[q].x, cfg.points[q].y, t, ignore=(q,)):
                cfg.shift(q, t)
        elif op == 2 and ids:
            cfg.set_mark(ids[rng.integers(len(ids))], float(rng.normal()))
        else:
            x, y, t = int(rng.integers(6)), int(rng.integers(6)), float(rng.uniform(0, 79))
            if cfg.can_place(x, y, t):
                cfg.insert(x, y, t, 0.0)
    check_structure(cfg)
    rebuilt = PointConfiguration(6, 6, 3, 7, 1.5, 80)
    for p in sorted(cfg, key=lambda p: p.pid):
        rebuilt.insert(p.x, p.y, p.t, p.m, p.pid)
    assert rebuilt.adj == cfg.adj


def test_remove_then_reinsert_restores_adjacency():
    cfg = random_config(np.random.default_rng(3))
    before = {k: set(v) for k, v in cfg.adj.items()}
    for q in sorted(cfg.points)[:10]:
        p = cfg.remove(q)
        cfg.insert(p.x, p.y, p.t, p.m, p.pid)
    assert cfg.adj == before


def test_small_shift_keeps_neighbours():
    cfg = PointConfiguration(3, 3, 5, 11, 1.0)
    a = cfg.insert(1, 1, 20.0, 0.0)
    b = cfg.insert(1, 2, 22.0, 0.0)
    cfg.shift(a, 21.0)
    assert cfg.adj[a] == {b}


def test_distance():
    assert point_distance(0, 0, 0, 0, 0, 2.5, 2.5) == 1.0
    assert point_distance(0, 0, 7, 0, 1, 7, 3.0) == 1.0
    rng = np.random.default_rng(0)
    for _ in range(50):
        a = rng.integers(0, 10, 2); b = rng.integers(0, 10, 2); t = rng.uniform(0, 50, 2)
        l_z = rng.uniform(0.5, 5)
        ref = math.sqrt((a[0] - b[0]) ** 2 + (a[1] - b[1]) ** 2 + ((t[0] - t[1]) / l_z) ** 2)
        assert point_distance(a[0], a[1], t[0], b[0], b[1], t[1], l_z) == pytest.approx(ref, rel=1e-15)


def test_configuration_from_arrays_resolves_conflicts():
    cfg = configuration_from_arrays([0, 0, 1], [0, 0, 1], [10.0, 12.0, 5.0], [0.0, 1.0, 0.5],
                                    2, 2, 2, 5, 1.0)
    assert sorted(p.m for p in cfg) == [0.5, 1.0]
    with pytest.raises(HardCoreViolation):
        configuration_from_arrays([0, 0], [0, 0], [10.0, 12.0], [0.0, 1.0], 2, 2, 2, 5, 1.0,
                                  on_conflict="raise")


def test_upsample_isolated_point():
    cfg = PointConfiguration(2, 2, 3, 7, 1.0)
    cfg.insert(1, 0, 30.0, math.log(9.0))
    fine = upsample(cfg, 3, 6, 6, 3, 7, 1.0)
    assert len(fine) == 9
    for p in fine:
        assert 3 <= p.x < 6 and 0 <= p.y < 3
        assert p.t == 30.0
        assert math.exp(p.m) == pytest.approx(1.0)


def test_upsample_plane_stays_on_plane():
    # coarse depth t = 10 + 6 x + 3 y on every coarse pixel
    cfg = PointConfiguration(4, 4, 10, 21, 1.0)
    for x in range(4):
        for y in range(4):
            cfg.insert(x, y, 50 + 6 * x + 3 * y, 0.0)
    fine = upsample(cfg, 3, 12, 12, 10, 21, 1.0)
    assert len(fine) == 144
    for p in fine:
        # the fine pixel centre in coarse units
        cx, cy = (p.x + 0.5) / 3 - 0.5, (p.y + 0.5) / 3 - 0.5
        assert abs(p.t - (50 + 6 * cx + 3 * cy)) <= 0.5


def test_upsample_two_surfaces_no_conflicts():
    cfg = PointConfiguration(3, 3, 3, 7, 1.0)
    for x in range(3):
        for y in range(3):
            cfg.insert(x, y, 20.0 + x, 0.0)
            cfg.insert(x, y, 60.0 - y, 1.0)
    fine = upsample(cfg, 3, 9, 9, 3, 7, 1.0)
    assert len(fine) == 2 * 81
    check_structure(fine)
