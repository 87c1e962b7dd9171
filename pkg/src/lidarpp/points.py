"""Mutable marked point configuration with a per-pixel index and adjacency lists."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np


class HardCoreViolation(ValueError):
    """Raised when an edit would put two same-pixel points closer than d_min."""


@dataclass
class Point:
    pid: int
    x: int       # row
    y: int       # column
    t: float     # continuous depth in bins
    m: float     # log-intensity


class PointConfiguration:
    """Points keyed by a stable integer id.

    Two points are neighbours when their pixels are 8-adjacent and
    ``|t - t'| <= n_b``. With ``d_min > 2 n_b`` this allows at most one
    neighbour per adjacent pixel.
    """

    def __init__(self, n_rows: int, n_cols: int, n_b: int, d_min: float, l_z: float,
                 n_bins: int | None = None):
        self.n_rows, self.n_cols = n_rows, n_cols
        self.n_b, self.d_min, self.l_z = n_b, float(d_min), float(l_z)
        self.n_bins = n_bins
        self.points: dict[int, Point] = {}
        self.pixels: dict[tuple[int, int], list[int]] = {}
        self.adj: dict[int, set[int]] = {}
        self._next_id = 0
        self._labels: dict[int, int] | None = None

    def __len__(self):
        return len(self.points)

    def __contains__(self, pid):
        return pid in self.points

    def __iter__(self):
        return iter(self.points.values())

    @property
    def next_id(self) -> int:
        return self._next_id

    def copy(self) -> "PointConfiguration":
        out = PointConfiguration(self.n_rows, self.n_cols, self.n_b, self.d_min, self.l_z, self.n_bins)
        out.points = {k: Point(p.pid, p.x, p.y, p.t, p.m) for k, p in self.points.items()}
        out.pixels = {k: list(v) for k, v in self.pixels.items()}
        out.adj = {k: set(v) for k, v in self.adj.items()}
        out._next_id = self._next_id
        return out

    # --- queries -----------------------------------------------------------
    def in_image(self, x: int, y: int) -> bool:
        return 0 <= x < self.n_rows and 0 <= y < self.n_cols

    def pixel_points(self, x: int, y: int) -> list[int]:
        """Ids in pixel (x, y), sorted by depth."""
        return self.pixels.get((x, y), [])

    def _depth_key(self, pid):
        return self.points[pid].t

    def can_place(self, x: int, y: int, t: float, ignore=()) -> bool:
        if self.d_min <= 0:
            return True
        for q in self.pixel_points(x, y):
            if q not in ignore and abs(self.points[q].t - t) < self.d_min:
                return False
        return True

    def candidate_neighbours(self, x: int, y: int, t: float, exclude=()) -> list[int]:
        """Ids that would neighbour a point placed at (x, y, t)."""
        out = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                ids = self.pixels.get((x + dx, y + dy))
                if not ids:
                    continue
                ts = [self.points[q].t for q in ids]
                lo = bisect.bisect_left(ts, t - self.n_b)
                hi = bisect.bisect_right(ts, t + self.n_b)
                out.extend(q for q in ids[lo:hi] if q not in exclude)
        return out

    def neighbours(self, pid: int) -> set[int]:
        return self.adj[pid]

    def distance(self, a, b) -> float:
        pa = self.points[a] if not isinstance(a, Point) else a
        pb = self.points[b] if not isinstance(b, Point) else b
        return point_distance(pa.x, pa.y, pa.t, pb.x, pb.y, pb.t, self.l_z)

    def free_adjacent_pixels(self, pid: int) -> list[tuple[int, int]]:
        """In-image 8-adjacent pixels that hold no neighbour of ``pid``."""
        p = self.points[pid]
        taken = {(self.points[q].x, self.points[q].y) for q in self.adj[pid]}
        out = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                c = (p.x + dx, p.y + dy)
                if self.in_image(*c) and c not in taken:
                    out.append(c)
        return out

    # --- edits -------------------------------------------------------------
    def insert(self, x: int, y: int, t: float, m: float, pid: int | None = None) -> int:
        """Add a point and return its id; neighbours are ``self.adj[id]``."""
        if not self.in_image(x, y):
            raise ValueError(f"pixel ({x}, {y}) outside the image")
        if self.n_bins is not None and not (0 <= t <= self.n_bins - 1):
            raise ValueError(f"depth {t} outside [0, {self.n_bins - 1}]")
        if not self.can_place(x, y, t):
            raise HardCoreViolation(f"hard-core violation at ({x}, {y}, {t})")
        if pid is None:
            pid = self._next_id
        elif pid in self.points:
            raise ValueError(f"id {pid} already in use")
        self._next_id = max(self._next_id, pid + 1)
        nbrs = self.candidate_neighbours(x, y, t)
        self.points[pid] = Point(pid, x, y, float(t), float(m))
        lst = self.pixels.setdefault((x, y), [])
        bisect.insort(lst, pid, key=self._depth_key)
        self.adj[pid] = set(nbrs)
        for q in nbrs:
            self.adj[q].add(pid)
        self._labels = None
        return pid

    def remove(self, pid: int) -> Point:
        p = self.points.pop(pid)
        lst = self.pixels[(p.x, p.y)]
        lst.remove(pid)
        if not lst:
            del self.pixels[(p.x, p.y)]
        for q in self.adj.pop(pid):
            self.adj[q].discard(pid)
        self._labels = None
        return p

    def shift(self, pid: int, t_new: float) -> None:
        p = self.points[pid]
        if self.n_bins is not None and not (0 <= t_new <= self.n_bins - 1):
            raise ValueError(f"depth {t_new} outside [0, {self.n_bins - 1}]")
        if not self.can_place(p.x, p.y, t_new, ignore=(pid,)):
            raise HardCoreViolation(f"hard-core violation shifting {pid} to {t_new}")
        lst = self.pixels[(p.x, p.y)]
        lst.remove(pid)
        p.t = float(t_new)
        bisect.insort(lst, pid, key=self._depth_key)
        old = self.adj[pid]
        new = set(self.candidate_neighbours(p.x, p.y, p.t))
        for q in old - new:
            self.adj[q].discard(pid)
        for q in new - old:
            self.adj[q].add(pid)
        self.adj[pid] = new
        if old != new:
            self._labels = None

    def set_mark(self, pid: int, m: float) -> None:
        self.points[pid].m = float(m)

    # --- surfaces ----------------------------------------------------------
    def surface_labels(self) -> dict[int, int]:
        """Connected-component label of every point (the minimum id in its component)."""
        if self._labels is None:
            labels: dict[int, int] = {}
            for start in sorted(self.points):
                if start in labels:
                    continue
                comp = [start]
                labels[start] = start
                stack = [start]
                while stack:
                    q = stack.pop()
                    for r in self.adj[q]:
                        if r not in labels:
                            labels[r] = start
                            stack.append(r)
                            comp.append(r)
            self._labels = labels
        return self._labels

    def component(self, seeds) -> set[int]:
        """Union of the connected components containing ``seeds``."""
        seen = set()
        stack = [s for s in seeds if s in self.points]
        seen.update(stack)
        while stack:
            q = stack.pop()
            for r in self.adj[q]:
                if r not in seen:
                    seen.add(r)
                    stack.append(r)
        return seen

    def to_arrays(self, labels: bool = False):
        """Arrays (rows, cols, depths, marks[, surface ids]) sorted by (row, col, depth)."""
        ids = sorted(self.points, key=lambda q: (self.points[q].x, self.points[q].y, self.points[q].t))
        rows = np.array([self.points[q].x for q in ids], dtype=np.int64)
        cols = np.array([self.points[q].y for q in ids], dtype=np.int64)
        t = np.array([self.points[q].t for q in ids], dtype=float)
        m = np.array([self.points[q].m for q in ids], dtype=float)
        if not labels:
            return rows, cols, t, m
        lab = self.surface_labels()
        # renumber surfaces 0..K-1 by first appearance in the sorted order
        remap: dict[int, int] = {}
        s = np.array([remap.setdefault(lab[q], len(remap)) for q in ids], dtype=np.int64)
        return rows, cols, t, m, s

    def signature(self):
        """Id-free description used for exact state comparisons."""
        return sorted((p.x, p.y, p.t, p.m) for p in self.points.values())


def point_distance(x1, y1, t1, x2, y2, t2, l_z) -> float:
    return math.sqrt((x1 - x2) ** 2 + (y1 - y2) ** 2 + ((t1 - t2) / l_z) ** 2)


def configuration_from_arrays(rows, cols, depths, marks, n_rows, n_cols, n_b, d_min, l_z,
                              n_bins=None, on_conflict="keep_larger") -> PointConfiguration:
    """Build a configuration, resolving hard-core conflicts by keeping the larger mark."""
    cfg = PointConfiguration(n_rows, n_cols, n_b, d_min, l_z, n_bins)
    order = np.lexsort((np.asarray(depths), -np.asarray(marks)))
    for n in order:
        x, y, t, m = int(rows[n]), int(cols[n]), float(depths[n]), float(marks[n])
        if not cfg.in_image(x, y):
            continue
        if n_bins is not None and not (0 <= t <= n_bins - 1):
            continue
        if cfg.can_place(x, y, t):
            cfg.insert(x, y, t, m)
        elif on_conflict == "raise":
            raise HardCoreViolation(f"conflict at ({x}, {y}, {t})")
    return cfg


def upsample(cfg: PointConfiguration, factor: int, n_rows: int, n_cols: int, n_b: int,
             d_min: float, l_z: float, n_bins: int | None = None,
             log_intensity_shift: float | None = None) -> PointConfiguration:
    """Expand every coarse point into a factor x factor block of fine points.

    Depth and log-intensity are extrapolated linearly inside the block with
    gradients fitted (least squares, minimum norm) to the coarse points of the
    same surface in the surrounding 3x3 coarse pixels, so each surface is
    interpolated on its own. Marks are shifted by ``log_intensity_shift``
    (default ``-2 log factor``, splitting a coarse intensity over the block).
    Points outside the fine image or cube are dropped; hard-core conflicts keep
    the higher intensity.
    """
    if log_intensity_shift is None:
        log_intensity_shift = -2.0 * math.log(factor)
    labels = cfg.surface_labels()
    offs = (np.arange(factor) + 0.5) / factor - 0.5
    rows, cols, ts, ms = [], [], [], []
    for p in sorted(cfg, key=lambda q: q.pid):
        lab = labels[p.pid]
        dxs, dys, dts, dms = [], [], [], []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                for q in cfg.pixel_points(p.x + dx, p.y + dy):
                    if labels[q] == lab and q in cfg.adj[p.pid]:
                        pq = cfg.points[q]
                        dxs.append(dx); dys.append(dy)
                        dts.append(pq.t - p.t); dms.append(pq.m - p.m)
        if dxs:
            A = np.column_stack((dxs, dys)).astype(float)
            gt = np.linalg.lstsq(A, np.array(dts), rcond=None)[0]
            gm = np.linalg.lstsq(A, np.array(dms), rcond=None)[0]
        else:
            gt = gm = np.zeros(2)
        for a in range(factor):
            for b in range(factor):
                rows.append(p.x * factor + a)
                cols.append(p.y * factor + b)
                ts.append(p.t + gt[0] * offs[a] + gt[1] * offs[b])
                ms.append(p.m + gm[0] * offs[a] + gm[1] * offs[b] + log_intensity_shift)
    return configuration_from_arrays(rows, cols, ts, ms, n_rows, n_cols, n_b, d_min, l_z, n_bins)
