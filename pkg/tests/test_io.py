import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lidarpp import io as lio
from lidarpp.data import SparseLidarCube
from lidarpp.points import PointConfiguration
from lidarpp.scenes import skewed_irf


@given(seed=st.integers(0, 2 ** 31))
@settings(max_examples=25, deadline=None)
def test_cube_round_trip(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    z = rng.poisson(0.3, size=(int(rng.integers(1, 5)), int(rng.integers(1, 5)), int(rng.integers(1, 30))))
    gain = rng.uniform(0.5, 2, size=z.shape[:2])
    cube = SparseLidarCube.from_dense(z, gain, bin_width=float(rng.uniform(0.1, 2)),
                                      pixel_pitch=float(rng.uniform(0.1, 2)))
    path = tmp_path_factory.mktemp("c") / "cube.txt"
    lio.write_cube(cube, path)
    back = lio.read_cube(path, gain=gain)
    assert np.array_equal(back.offsets, cube.offsets)
    assert np.array_equal(back.bins, cube.bins)
    assert np.array_equal(back.counts, cube.counts)
    assert back.bin_width == cube.bin_width and back.pixel_pitch == cube.pixel_pitch


def test_empty_cube_has_header_only(tmp_path):
    cube = SparseLidarCube.from_dense(np.zeros((2, 3, 4), dtype=int))
    lio.write_cube(cube, tmp_path / "c.txt")
    lines = (tmp_path / "c.txt").read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("lidar-cube v1 2 3 4")
    assert lio.read_cube(tmp_path / "c.txt").total_photons() == 0


@pytest.mark.parametrize("body,match", [
    ("lidar-cube v1 2 2 5 1 1\n1 1 6 1\n", "outside"),
    ("lidar-cube v1 2 2 5 1 1\n1 1 2\n", "expected"),
    ("lidar-cube v1 2 2 5 1 1\n1 1 2 0\n", ">= 1"),
    ("lidar-cube v1 2 2 5 1 1\n1 1 2 1\n1 1 2 3\n", "duplicate"),
    ("cube 2 2\n", "header"),
])
def test_cube_parse_errors_carry_line_numbers(tmp_path, body, match):
    p = tmp_path / "bad.txt"
    p.write_text(body)
    with pytest.raises(lio.ParseError, match=match):
        lio.read_cube(p)


def test_irf_round_trip(tmp_path):
    irf = skewed_irf(5, 17)
    lio.write_irf(irf, tmp_path / "h.txt")
    back = lio.read_irf(tmp_path / "h.txt")
    assert np.array_equal(back.samples, irf.samples)
    assert (back.attack, back.decay) == (irf.attack, irf.decay)


def test_irf_length_mismatch(tmp_path):
    (tmp_path / "h.txt").write_text("irf v1 3 0 2\n1.0\n0.5\n")
    with pytest.raises(lio.ParseError, match="expected 3"):
        lio.read_irf(tmp_path / "h.txt")


def _three_points():
    cfg = PointConfiguration(4, 4, 2, 5, 1.0, 50)
    cfg.insert(0, 0, 10.25, 0.0)
    cfg.insert(0, 1, 11.0, np.log(2.0))
    cfg.insert(3, 3, 40.0, np.log(3.0))
    return cfg


def test_ply_export_has_vertex_records(tmp_path):
    lio.write_point_cloud(_three_points(), tmp_path / "p.ply", "ply", bin_width=0.5, pixel_pitch=2.0)
    lines = (tmp_path / "p.ply").read_text().splitlines()
    assert lines[0] == "ply" and "element vertex 3" in lines
    body = lines[lines.index("end_header") + 1:]
    assert len(body) == 3
    x, y, z, r, s = body[0].split()
    assert (float(x), float(y), float(z), float(r), int(s)) == (2.0, 2.0, 11.25 * 0.5, 1.0, 0)
    # points 0 and 1 are neighbours, point 2 is on its own surface
    assert [int(b.split()[4]) for b in body] == [0, 0, 1]


def test_points_csv_round_trip(tmp_path):
    cfg = _three_points()
    lio.write_point_cloud(cfg, tmp_path / "p.csv")
    r, c, t, inten, s = lio.read_points_csv(tmp_path / "p.csv")
    rr, cc, tt, mm = cfg.to_arrays()
    assert np.array_equal(r, rr) and np.array_equal(c, cc)
    assert np.array_equal(t, tt)
    np.testing.assert_allclose(inten, np.exp(mm), rtol=1e-15)


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        lio.write_point_cloud(_three_points(), tmp_path / "p.x", "xyz")


def test_gain_grid_shape_checked(tmp_path):
    lio.write_grid(np.ones((2, 3)), tmp_path / "g.csv")
    assert lio.read_gain(tmp_path / "g.csv", 2, 3).shape == (2, 3)
    with pytest.raises(ValueError):
        lio.read_gain(tmp_path / "g.csv", 3, 3)
