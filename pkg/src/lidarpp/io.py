"""Plain-text readers and writers. Files use 1-based pixel and bin indices."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import ImpulseResponse, SparseLidarCube


class ParseError(ValueError):
    def __init__(self, path, lineno, msg):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_cube(cube: SparseLidarCube, path) -> None:
    path = Path(path)
    k = cube.pixel_ids()
    i, j = np.divmod(k, cube.n_cols)
    with path.open("w") as fh:
        fh.write(f"lidar-cube v1 {cube.n_rows} {cube.n_cols} {cube.n_bins} "
                 f"{_fmt(cube.bin_width)} {_fmt(cube.pixel_pitch)}\n")
        for a, b, t, z in zip(i + 1, j + 1, cube.bins + 1, cube.counts):
            fh.write(f"{a} {b} {t} {z}\n")


def read_cube(path, gain=None) -> SparseLidarCube:
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().split()
        if len(header) != 7 or header[:2] != ["lidar-cube", "v1"]:
            raise ParseError(path, 1, "expected header 'lidar-cube v1 N_r N_c T delta_b delta_p'")
        try:
            nr, nc, T = (int(x) for x in header[2:5])
            db, dp = float(header[5]), float(header[6])
        except ValueError as exc:
            raise ParseError(path, 1, str(exc)) from None
        if min(nr, nc, T) < 1 or db <= 0 or dp <= 0:
            raise ParseError(path, 1, "dimensions and spacings must be positive")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            s = line.strip()
            if not s:
                continue
            parts = s.split()
            if len(parts) != 4:
                raise ParseError(path, lineno, f"expected 'i j t count', got {s!r}")
            try:
                i, j, t, z = (int(p) for p in parts)
            except ValueError:
                raise ParseError(path, lineno, f"non-integer field in {s!r}") from None
            if not (1 <= i <= nr and 1 <= j <= nc and 1 <= t <= T):
                raise ParseError(path, lineno, f"index ({i}, {j}, {t}) outside {nr}x{nc}x{T}")
            if z < 1:
                raise ParseError(path, lineno, "counts must be >= 1")
            rows.append((i - 1, j - 1, t - 1, z))
    arr = np.array(rows, dtype=np.int64).reshape(-1, 4)
    pix = arr[:, 0] * nc + arr[:, 1]
    key = pix * T + arr[:, 2]
    if np.unique(key).size != key.size:
        raise ParseError(path, 0, "duplicate (i, j, t) entries")
    return SparseLidarCube.from_entries(nr, nc, T, pix, arr[:, 2], arr[:, 3], gain, db, dp)


def write_irf(irf: ImpulseResponse | np.ndarray, path, attack=None, decay=None) -> None:
    if isinstance(irf, ImpulseResponse):
        samples, attack, decay = irf.samples, irf.attack, irf.decay
    else:
        samples = np.asarray(irf, dtype=float)
        if attack is None:
            attack = int(np.argmax(samples))
        if decay is None:
            decay = samples.size - 1 - attack
    with Path(path).open("w") as fh:
        fh.write(f"irf v1 {samples.size} {attack} {decay}\n")
        for v in samples:
            fh.write(_fmt(v) + "\n")


def read_irf(path) -> ImpulseResponse:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise ParseError(path, 1, "empty file")
    header = lines[0].split()
    if len(header) != 5 or header[:2] != ["irf", "v1"]:
        raise ParseError(path, 1, "expected header 'irf v1 length attack decay'")
    try:
        n = int(header[2])
    except ValueError:
        raise ParseError(path, 1, "length must be an integer") from None
    vals = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            vals.append(float(line))
        except ValueError:
            raise ParseError(path, lineno, f"not a number: {line.strip()!r}") from None
    if len(vals) != n:
        raise ParseError(path, len(lines), f"expected {n} samples, found {len(vals)}")
    return ImpulseResponse(np.array(vals))


def read_gain(path, n_rows, n_cols) -> np.ndarray:
    g = np.loadtxt(path, delimiter=",", ndmin=2)
    if g.shape != (n_rows, n_cols):
        raise ValueError(f"gain grid {g.shape} does not match cube {(n_rows, n_cols)}")
    return g


def write_grid(grid: np.ndarray, path) -> None:
    with Path(path).open("w") as fh:
        for row in np.atleast_2d(grid):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def read_grid(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_points_csv(rows, cols, depths, intensities, surfaces, path) -> None:
    with Path(path).open("w") as fh:
        fh.write("i,j,t,intensity,surface_id\n")
        for i, j, t, r, s in zip(rows, cols, depths, intensities, surfaces):
            fh.write(f"{int(i) + 1},{int(j) + 1},{_fmt(float(t) + 1)},{_fmt(r)},{int(s)}\n")


def read_points_csv(path):
    """Return 0-based (rows, cols, depths, intensities, surfaces)."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0].strip() != "i,j,t,intensity,surface_id":
        raise ParseError(path, 1, "expected header 'i,j,t,intensity,surface_id'")
    out = [[], [], [], [], []]
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 5:
            raise ParseError(path, lineno, "expected 5 comma-separated fields")
        try:
            out[0].append(int(parts[0]) - 1)
            out[1].append(int(parts[1]) - 1)
            out[2].append(float(parts[2]) - 1)
            out[3].append(float(parts[3]))
            out[4].append(int(parts[4]))
        except ValueError:
            raise ParseError(path, lineno, f"malformed record {line.strip()!r}") from None
    return (np.array(out[0], dtype=np.int64), np.array(out[1], dtype=np.int64),
            np.array(out[2], dtype=float), np.array(out[3], dtype=float),
            np.array(out[4], dtype=np.int64))


def write_points_ply(rows, cols, depths, intensities, surfaces, path, bin_width=1.0,
                     pixel_pitch=1.0) -> None:
    """ASCII PLY; x = j*pitch, y = i*pitch, z = t*bin_width with 1-based i, j, t."""
    n = len(rows)
    with Path(path).open("w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {n}\n")
        for name in ("x", "y", "z", "intensity"):
            fh.write(f"property float {name}\n")
        fh.write("property int surface_id\nend_header\n")
        for i, j, t, r, s in zip(rows, cols, depths, intensities, surfaces):
            x = (int(j) + 1) * pixel_pitch
            y = (int(i) + 1) * pixel_pitch
            z = (float(t) + 1) * bin_width
            fh.write(f"{_fmt(x)} {_fmt(y)} {_fmt(z)} {_fmt(r)} {int(s)}\n")


def write_point_cloud(config, path, fmt="csv", intensity_scale=1.0, bin_width=1.0,
                      pixel_pitch=1.0) -> None:
    """Export a PointConfiguration; intensities are multiplied by ``intensity_scale``."""
    rows, cols, depths, marks, surf = config.to_arrays(labels=True)
    inten = np.exp(marks) * intensity_scale
    if fmt == "csv":
        write_points_csv(rows, cols, depths, inten, surf, path)
    elif fmt == "ply":
        write_points_ply(rows, cols, depths, inten, surf, path, bin_width, pixel_pitch)
    else:
        raise ValueError(f"unknown point-cloud format {fmt!r}")
