"""Reversible-jump MCMC over (point cloud, background).

Every move edits the points of a single pixel (and possibly that pixel's
background). An edit is applied tentatively, all density changes are read
off local caches, and the edit is either kept or undone. The running log
posterior is tracked without the GMRF log-determinant, whose local ratios are
accumulated separately (they are approximate in the default "local" mode).

Log acceptance ratios, with densities of point positions taken relative to
the uniform reference measure on the admissible support A (mass one):

* birth   dlp + log(p_death/p_birth) - log(N+1) - log(1-u)
* dilate  dlp + log(p_erosion/p_dilation) - log|Er'| - log(q_pos |A|) - log q_mark(m)
* shift, mark: dlp
* split   dlp - log|A| + log(p_merge/p_split) - log M' + log N + log(A+D-d_min) - log(u(1-u))

death, erosion and merge use the negated ratio of their forward move.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .background import BackgroundField, gibbs_sweep
from .config import MOVE_NAMES, HyperParameters, MoveTable, SamplerOptions
from .data import ImpulseResponse, SparseLidarCube
from .likelihood import PixelRates, cube_log_likelihood
from .points import Point, PointConfiguration
from .priors import (background_marginal_log_density, full_log_det, gmrf_conditional,
                     gmrf_quadratic, local_quadratic, local_union_measure, union_measure,
                     window_log_det)
from .support import AdmissibleSupport

LOG_2PI = math.log(2 * math.pi)


class IndexedSet:
    """Set with O(1) insert, delete and uniform draw; iteration order is deterministic."""

    def __init__(self):
        self._items: list = []
        self._pos: dict = {}

    def __len__(self):
        return len(self._items)

    def __contains__(self, x):
        return x in self._pos

    def add(self, x):
        if x not in self._pos:
            self._pos[x] = len(self._items)
            self._items.append(x)

    def discard(self, x):
        i = self._pos.pop(x, None)
        if i is None:
            return
        last = self._items.pop()
        if i < len(self._items):
            self._items[i] = last
            self._pos[last] = i

    def draw(self, rng: np.random.Generator):
        return self._items[int(rng.integers(len(self._items)))]

    def items(self):
        return list(self._items)


def prior_only_background_log_density(B: np.ndarray, alpha: float) -> float:
    """Independent Gamma(alpha, 1) background density used by the prior-only chain."""
    B = np.asarray(B, dtype=float)
    if np.any(B <= 0):
        return -math.inf
    return float(((alpha - 1) * np.log(B) - B).sum() - B.size * math.lgamma(alpha))


def log_posterior(cube: SparseLidarCube, irf: ImpulseResponse, cfg: PointConfiguration,
                  B: np.ndarray, hyper: HyperParameters, prior_only: bool = False,
                  with_logdet: bool = True) -> float:
    """From-scratch log posterior (up to a constant), reference measure of mass one on A."""
    from .priors import strauss_log_density
    if strauss_log_density(cfg) == -math.inf:
        return -math.inf
    n = len(cfg)
    ll = 0.0 if prior_only else cube_log_likelihood(cube, cfg, B, irf)
    lpb = (prior_only_background_log_density(B, hyper.alpha_b) if prior_only
           else background_marginal_log_density(B, hyper.alpha_b))
    lp = (ll + lpb + n * math.log(hyper.lambda_a) - hyper.log_gamma * union_measure(cfg)
          - 0.5 * gmrf_quadratic(cfg, hyper.beta) / hyper.sigma2
          - 0.5 * n * (LOG_2PI + math.log(hyper.sigma2)))
    if with_logdet:
        lp += 0.5 * full_log_det(cfg, hyper.beta)
    return lp


@dataclass
class Proposal:
    """A tentatively applied move. Call ``accept`` or ``reject`` exactly once."""

    move: str
    log_ratio: float
    aux: dict
    _trial: "_Trial | None"
    _sampler: "Sampler"

    def accept(self):
        self._sampler._commit(self._trial)

    def reject(self):
        self._sampler._undo(self._trial)


@dataclass
class _Trial:
    k: int
    removed: list          # Point objects taken out
    new_ids: list
    affected: set
    a: int
    e: int
    new_sig: np.ndarray
    new_mass: float
    new_ll: float
    b_new: float | None
    dlp: float
    half_ldr: float


@dataclass
class RunResult:
    map_config: PointConfiguration
    background: np.ndarray
    map_value: float
    acceptance: dict
    trace: list
    k_return: np.ndarray | None
    n_iter: int
    burn_in: int
    lp_audit: list = field(default_factory=list)


class Sampler:
    def __init__(self, cube: SparseLidarCube, irf: ImpulseResponse, hyper: HyperParameters,
                 moves: MoveTable | None = None, options: SamplerOptions | None = None,
                 seed=None, support: AdmissibleSupport | None = None,
                 init_config: PointConfiguration | None = None,
                 init_background: np.ndarray | None = None, rng: np.random.Generator | None = None):
        self.cube, self.irf, self.hyper = cube, irf, hyper
        self.moves = moves or MoveTable()
        self.opts = options or SamplerOptions()
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        nr, nc, T = cube.shape
        self.support = support or AdmissibleSupport.full(nr, nc, T)
        self.H = irf.total_sum
        self.prior_only = self.opts.prior_only
        self.shift_sd = self.opts.shift_scale if self.opts.shift_scale is not None else hyper.n_b / 3.0
        self.mark_sd = self.opts.mark_scale
        self.extent = float(irf.extent)      # attack + decay, the split/merge range
        self.log_lambda = math.log(hyper.lambda_a)
        self.log_gamma = hyper.log_gamma
        self.point_const = self.log_lambda - 0.5 * (LOG_2PI + math.log(hyper.sigma2))

        if init_config is None:
            self.cfg = PointConfiguration(nr, nc, hyper.n_b, hyper.hard_core, hyper.l_z, T)
        else:
            self.cfg = init_config.copy()
            self.cfg.n_b, self.cfg.d_min, self.cfg.l_z = hyper.n_b, hyper.hard_core, hyper.l_z
        if init_background is None:
            self.field = BackgroundField.random((nr, nc), hyper.alpha_b, self.rng)
        else:
            self.field = BackgroundField(init_background, hyper.alpha_b)
        self.rates = PixelRates(cube, irf)

        self.all_ids = IndexedSet()
        self.eligible = IndexedSet()      # at least one free adjacent pixel
        self.has_nbr = IndexedSet()       # at least one neighbour
        self.pairs = IndexedSet()         # mergeable same-pixel pairs
        self._pixel_pairs: dict[int, list] = {}
        for q in sorted(self.cfg.points):
            self._refresh_point(q)
        for key in sorted(self.cfg.pixels):
            self._refresh_pairs(key[0] * nc + key[1])

        self.n_prop = dict.fromkeys(MOVE_NAMES, 0)
        self.n_acc = dict.fromkeys(MOVE_NAMES, 0)
        self._movefn = [getattr(self, "propose_" + n) for n in MOVE_NAMES]
        self._cum = np.cumsum(self.moves.probabilities())
        self._journal: list | None = None
        self.recompute()

    # --- bookkeeping -------------------------------------------------------
    def recompute(self) -> float:
        """Rebuild every cache from scratch and return the tracked log posterior."""
        B = self.field.B
        if self.prior_only:
            self.rates.rebuild(self.cfg, B)
            self.rates.pix_ll[:] = 0.0
            lpb = prior_only_background_log_density(B, self.hyper.alpha_b)
        else:
            self.rates.rebuild(self.cfg, B)
            lpb = background_marginal_log_density(B, self.hyper.alpha_b)
        self.S = _nsums(B)
        n = len(self.cfg)
        self.lp = (float(self.rates.pix_ll.sum()) + lpb + n * self.point_const
                   - self.log_gamma * union_measure(self.cfg)
                   - 0.5 * gmrf_quadratic(self.cfg, self.hyper.beta) / self.hyper.sigma2)
        if not hasattr(self, "half_logdet"):
            self.half_logdet = 0.5 * full_log_det(self.cfg, self.hyper.beta)
        return self.lp

    def objective(self) -> float:
        """Tracked log posterior including the accumulated determinant terms."""
        return self.lp + self.half_logdet

    def _n_free(self, q: int) -> int:
        return len(self.cfg.free_adjacent_pixels(q))

    def _refresh_point(self, q: int):
        if q not in self.cfg.points:
            self.all_ids.discard(q)
            self.eligible.discard(q)
            self.has_nbr.discard(q)
            return
        self.all_ids.add(q)
        (self.eligible.add if self._n_free(q) > 0 else self.eligible.discard)(q)
        (self.has_nbr.add if self.cfg.adj[q] else self.has_nbr.discard)(q)

    def _refresh_pairs(self, k: int):
        for pr in self._pixel_pairs.pop(k, ()):
            self.pairs.discard(pr)
        x, y = divmod(k, self.cube.n_cols)
        ids = self.cfg.pixel_points(x, y)
        if len(ids) < 2:
            return
        lst = []
        for n, a in enumerate(ids):
            for b in ids[n + 1:]:
                dt = abs(self.cfg.points[b].t - self.cfg.points[a].t)
                if self.hyper.hard_core < dt <= self.extent:
                    pr = (a, b) if a < b else (b, a)
                    lst.append(pr)
                    self.pairs.add(pr)
        if lst:
            self._pixel_pairs[k] = lst

    def _logdet(self, ids) -> float:
        ids = [q for q in ids if q in self.cfg.points]
        if self.opts.logdet == "exact":
            ids = self.cfg.component(ids)
        return window_log_det(self.cfg, ids, self.hyper.beta)

    def _lpb_delta(self, k: int, b_new: float) -> float:
        B = self.field.B
        b_old = B.flat[k]
        a = self.hyper.alpha_b
        if self.prior_only:
            return (a - 1) * (math.log(b_new) - math.log(b_old)) - (b_new - b_old)
        nr, nc = B.shape
        x, y = divmod(k, nc)
        d = b_new - b_old
        out = (a - 1) * (math.log(b_new) - math.log(b_old))
        for cx, cy in ((x, y), (x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)):
            if 0 <= cx < nr and 0 <= cy < nc:
                s = self.S[cx, cy]
                out -= a * (math.log(s + d) - math.log(s))
        return out

    # --- transactional edit ------------------------------------------------
    def _trial(self, k: int, removed: list[int], added: list[tuple[float, float, int | None]],
               b_new: float | None = None) -> _Trial | None:
        """Replace ``removed`` ids of pixel k by ``added`` (t, m, id-or-None).

        Returns None (and leaves the state untouched) on a hard-core violation.
        Otherwise the configuration is left in the edited state.
        """
        cfg, hyper = self.cfg, self.hyper
        x, y = divmod(k, self.cube.n_cols)
        excl = set(removed)
        d_min = hyper.hard_core
        for n, (t, m, _) in enumerate(added):
            if not cfg.can_place(x, y, t, ignore=excl):
                return None
            for t2, _, _ in added[n + 1:]:
                if abs(t2 - t) < d_min:
                    return None
        window = set(removed)
        for q in removed:
            window |= cfg.adj[q]
        for t, m, _ in added:
            window.update(cfg.candidate_neighbours(x, y, t, excl))
        q0 = local_quadratic(cfg, removed, hyper.beta)
        u0 = local_union_measure(cfg, x, y)
        ld0 = self._logdet(window)
        rem_pts = [cfg.remove(q) for q in removed]
        new_ids = [cfg.insert(x, y, t, m, pid) for t, m, pid in added]
        window_after = (window - excl) | set(new_ids)
        q1 = local_quadratic(cfg, new_ids, hyper.beta)
        u1 = local_union_measure(cfg, x, y)
        ld1 = self._logdet(window_after)

        depths = [p.t for p in rem_pts] + [t for t, _, _ in added]
        a, e = self.rates.window(k, depths)
        pts = [(cfg.points[q].t, cfg.points[q].m) for q in cfg.pixel_points(x, y)]
        new_sig = self.rates.window_signal(a, e, pts)
        new_mass = self.rates.signal_mass(pts)
        b = self.field.B.flat[k]
        if self.prior_only:
            dll, new_ll = 0.0, 0.0
        elif b_new is None:
            dll = self.rates.window_delta(k, b, a, e, new_sig, new_mass)
            new_ll = self.rates.pix_ll[k] + dll
        else:
            new_ll = self.rates.evaluate(k, b_new, a, e, new_sig, new_mass)
            dll = new_ll - self.rates.pix_ll[k]
        dlpb = self._lpb_delta(k, b_new) if b_new is not None else 0.0
        dn = len(added) - len(removed)
        dlp = (dll + dlpb + dn * self.point_const - self.log_gamma * (u1 - u0)
               - 0.5 * (q1 - q0) / hyper.sigma2)
        affected = window | window_after
        for q in affected:
            self._refresh_point(q)
        self._refresh_pairs(k)
        return _Trial(k, rem_pts, new_ids, affected, a, e, new_sig, new_mass, new_ll, b_new,
                      dlp, 0.5 * (ld1 - ld0))

    def _commit(self, tr: _Trial | None):
        if tr is None:
            return
        k = tr.k
        if self.prior_only:
            self.rates.commit(k, tr.a, tr.e, tr.new_sig, tr.new_mass, 0.0)
        else:
            self.rates.commit(k, tr.a, tr.e, tr.new_sig, tr.new_mass, tr.new_ll)
        if tr.b_new is not None:
            B = self.field.B
            d = tr.b_new - B.flat[k]
            B.flat[k] = tr.b_new
            nr, nc = B.shape
            x, y = divmod(k, nc)
            for cx, cy in ((x, y), (x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1)):
                if 0 <= cx < nr and 0 <= cy < nc:
                    self.S[cx, cy] += d
        self.lp += tr.dlp
        self.half_logdet += tr.half_ldr
        if self._journal is not None:
            self._journal.append(([p.pid for p in tr.removed],
                                  [Point(q, *self._xytm(q)) for q in tr.new_ids]))

    def _xytm(self, q):
        p = self.cfg.points[q]
        return p.x, p.y, p.t, p.m

    def _undo(self, tr: _Trial | None):
        if tr is None:
            return
        for q in tr.new_ids:
            self.cfg.remove(q)
        for p in tr.removed:
            self.cfg.insert(p.x, p.y, p.t, p.m, p.pid)
        for q in tr.affected:
            self._refresh_point(q)
        self._refresh_pairs(tr.k)

    def _make(self, move, log_ratio, aux, trial) -> Proposal:
        return Proposal(move, log_ratio, aux, trial, self)

    def _pixel_of(self, q: int) -> int:
        p = self.cfg.points[q]
        return p.x * self.cube.n_cols + p.y

    def _in_support(self, k: int, t: float) -> bool:
        return 0.0 <= t <= self.cube.n_bins - 1 and self.support.contains(k, t)

    # --- moves -------------------------------------------------------------
    def propose_birth(self, aux: dict | None = None) -> Proposal | None:
        if self.support.measure <= 0:
            return None
        if aux is None:
            k, t = self.support.sample(self.rng)
            aux = {"pixel": k, "t": t, "u": self.rng.random()}
        k, t, u = aux["pixel"], aux["t"], aux["u"]
        if not (0.0 < u < 1.0) or not self._in_support(k, t):
            return None
        b = self.field.B.flat[k]
        m = math.log((1 - u) * b * self.cube.n_bins / self.H)
        n = len(self.cfg)
        tr = self._trial(k, [], [(t, m, None)], b_new=u * b)
        if tr is None:
            return None
        lr = (tr.dlp + tr.half_ldr + math.log(self.moves.death / self.moves.birth)
              - math.log(n + 1) - math.log(1 - u))
        aux = dict(aux, m=m, pid=tr.new_ids[0])
        return self._make("birth", lr, aux, tr)

    def propose_death(self, aux: dict | None = None) -> Proposal | None:
        n = len(self.cfg)
        if n == 0:
            return None
        q = aux["pid"] if aux else self.all_ids.draw(self.rng)
        p = self.cfg.points[q]
        k = p.x * self.cube.n_cols + p.y
        b = self.field.B.flat[k]
        r_mass = math.exp(p.m) * self.H / self.cube.n_bins
        b_new = b + r_mass
        u = b / b_new
        tr = self._trial(k, [q], [], b_new=b_new)
        # log(1 - u) computed without cancellation for points much fainter than b
        lr = (tr.dlp + tr.half_ldr - math.log(self.moves.death / self.moves.birth)
              + math.log(n) + math.log(r_mass) - math.log(b_new))
        return self._make("death", lr, {"pid": q, "u": u, "pixel": k, "t": p.t}, tr)

    def _dilation_pos_density(self, c_pixel, parents, n_eligible) -> float:
        """Density (per pixel per bin) of dilation proposing a point in ``c_pixel``.

        ``parents`` are the would-be neighbours of the point; the current
        configuration must be the one without it.
        """
        total = 0.0
        for q in parents:
            free = self.cfg.free_adjacent_pixels(q)
            if c_pixel in free:
                total += 1.0 / (len(free) * 2.0 * self.hyper.n_b)
        return total / n_eligible

    def propose_dilation(self, aux: dict | None = None) -> Proposal | None:
        cfg, hyper = self.cfg, self.hyper
        n_elig = len(self.eligible)
        if n_elig == 0:
            return None
        if aux is None:
            parent = self.eligible.draw(self.rng)
            free = cfg.free_adjacent_pixels(parent)
            pix = free[int(self.rng.integers(len(free)))]
            tp = cfg.points[parent].t
            t = tp + (2 * self.rng.random() - 1) * hyper.n_b
            aux = {"parent": parent, "pixel_xy": pix, "t": t, "z": float(self.rng.standard_normal())}
        x, y = aux["pixel_xy"]
        t = aux["t"]
        k = x * self.cube.n_cols + y
        if not self._in_support(k, t):
            return None
        nbrs = cfg.candidate_neighbours(x, y, t)
        D, mu = gmrf_conditional(cfg, x, y, t, hyper.beta)
        var = hyper.sigma2 / D
        m = aux.get("m", mu + math.sqrt(var) * aux.get("z", 0.0))
        b = self.field.B.flat[k]
        b_new = b - math.exp(m) * self.H / self.cube.n_bins
        if b_new <= 0:
            return None
        if not cfg.can_place(x, y, t):
            return None
        q_pos = self._dilation_pos_density((x, y), nbrs, n_elig)
        tr = self._trial(k, [], [(t, m, None)], b_new=b_new)
        if tr is None:
            return None
        log_qm = -0.5 * (m - mu) ** 2 / var - 0.5 * math.log(2 * math.pi * var)
        lr = (tr.dlp + tr.half_ldr + math.log(self.moves.erosion / self.moves.dilation)
              - math.log(len(self.has_nbr)) - math.log(q_pos * self.support.measure) - log_qm)
        return self._make("dilation", lr, dict(aux, m=m, pid=tr.new_ids[0], mu=mu, var=var), tr)

    def propose_erosion(self, aux: dict | None = None) -> Proposal | None:
        cfg, hyper = self.cfg, self.hyper
        n_er = len(self.has_nbr)
        if n_er == 0:
            return None
        q = aux["pid"] if aux else self.has_nbr.draw(self.rng)
        p = cfg.points[q]
        x, y, t, m = p.x, p.y, p.t, p.m
        k = x * self.cube.n_cols + y
        D, mu = gmrf_conditional(cfg, x, y, t, hyper.beta, exclude=(q,))
        var = hyper.sigma2 / D
        parents = list(cfg.adj[q])
        b_new = self.field.B.flat[k] + math.exp(m) * self.H / self.cube.n_bins
        tr = self._trial(k, [q], [], b_new=b_new)
        n_elig = len(self.eligible)
        q_pos = self._dilation_pos_density((x, y), parents, n_elig) if n_elig else 0.0
        log_qm = -0.5 * (m - mu) ** 2 / var - 0.5 * math.log(2 * math.pi * var)
        if q_pos <= 0:
            lr = -math.inf
        else:
            lr = (tr.dlp + tr.half_ldr - math.log(self.moves.erosion / self.moves.dilation)
                  + math.log(n_er) + math.log(q_pos * self.support.measure) + log_qm)
        return self._make("erosion", lr, {"pid": q, "pixel_xy": (x, y), "t": t, "m": m}, tr)

    def propose_shift(self, aux: dict | None = None) -> Proposal | None:
        if len(self.cfg) == 0:
            return None
        if aux is None:
            q = self.all_ids.draw(self.rng)
            aux = {"pid": q, "t_new": self.cfg.points[q].t + self.shift_sd * self.rng.standard_normal()}
        q, t_new = aux["pid"], aux["t_new"]
        p = self.cfg.points[q]
        k = p.x * self.cube.n_cols + p.y
        if not self._in_support(k, t_new):
            return None
        tr = self._trial(k, [q], [(t_new, p.m, q)])
        if tr is None:
            return None
        return self._make("shift", tr.dlp + tr.half_ldr, aux, tr)

    def propose_mark(self, aux: dict | None = None) -> Proposal | None:
        if len(self.cfg) == 0:
            return None
        if aux is None:
            q = self.all_ids.draw(self.rng)
            aux = {"pid": q, "m_new": self.cfg.points[q].m + self.mark_sd * self.rng.standard_normal()}
        q, m_new = aux["pid"], aux["m_new"]
        p = self.cfg.points[q]
        k = p.x * self.cube.n_cols + p.y
        tr = self._trial(k, [q], [(p.t, m_new, q)])
        return self._make("mark", tr.dlp + tr.half_ldr, aux, tr)

    def propose_split(self, aux: dict | None = None) -> Proposal | None:
        n = len(self.cfg)
        d_min = self.hyper.hard_core
        width = self.extent - d_min
        if n == 0 or width <= 0:
            return None
        if aux is None:
            q = self.all_ids.draw(self.rng)
            aux = {"pid": q, "u": self.rng.random(), "delta": d_min + width * self.rng.random()}
        q, u, delta = aux["pid"], aux["u"], aux["delta"]
        if not (0.0 < u < 1.0) or not (d_min < delta <= self.extent):
            return None
        p = self.cfg.points[q]
        k = p.x * self.cube.n_cols + p.y
        t1, t2 = p.t - (1 - u) * delta, p.t + u * delta
        m1, m2 = p.m + math.log(u), p.m + math.log(1 - u)
        if not (self._in_support(k, t1) and self._in_support(k, t2)):
            return None
        tr = self._trial(k, [q], [(t1, m1, None), (t2, m2, None)])
        if tr is None:
            return None
        lr = (tr.dlp + tr.half_ldr - math.log(self.support.measure)
              + math.log(self.moves.merge / self.moves.split) - math.log(len(self.pairs))
              + math.log(n) + math.log(width) - math.log(u * (1 - u)))
        return self._make("split", lr, dict(aux, new_ids=tuple(tr.new_ids)), tr)

    def propose_merge(self, aux: dict | None = None) -> Proposal | None:
        n_pairs = len(self.pairs)
        if n_pairs == 0:
            return None
        a, b = aux["pair"] if aux else self.pairs.draw(self.rng)
        pa, pb = self.cfg.points[a], self.cfg.points[b]
        if pa.t > pb.t:
            pa, pb = pb, pa
        ra, rb = math.exp(pa.m), math.exp(pb.m)
        u = ra / (ra + rb)
        delta = pb.t - pa.t
        t = u * pa.t + (1 - u) * pb.t
        m = math.log(ra + rb)
        k = pa.x * self.cube.n_cols + pa.y
        if not self._in_support(k, t):
            return None
        n = len(self.cfg)
        tr = self._trial(k, [pa.pid, pb.pid], [(t, m, None)])
        if tr is None:
            return None
        d_min = self.hyper.hard_core
        lr = (tr.dlp + tr.half_ldr + math.log(self.support.measure)
              - math.log(self.moves.merge / self.moves.split) + math.log(n_pairs)
              - math.log(n - 1) - math.log(self.extent - d_min) + math.log(u * (1 - u)))
        return self._make("merge", lr, {"pair": (pa.pid, pb.pid), "u": u, "delta": delta,
                                        "pid": tr.new_ids[0]}, tr)

    # --- driver ------------------------------------------------------------
    def step(self) -> tuple[str, bool]:
        v = self.rng.random()
        idx = min(int(np.searchsorted(self._cum, v, side="right")), len(MOVE_NAMES) - 1)
        name = MOVE_NAMES[idx]
        self.n_prop[name] += 1
        prop = self._movefn[idx]()
        if prop is None:
            return name, False
        if prop.log_ratio >= 0 or math.log(self.rng.random()) < prop.log_ratio:
            prop.accept()
            self.n_acc[name] += 1
            return name, True
        prop.reject()
        return name, False

    def background_sweep(self) -> None:
        if self.prior_only:
            # the prior-only background is independent of the points: draw it exactly
            self.field.B[:] = self.rng.gamma(self.hyper.alpha_b, 1.0, size=self.field.B.shape)
            self.recompute()
            return
        gibbs_sweep(self.rates, self.field, self.rng, self.opts.poisson_threshold)
        self.recompute()

    def acceptance_rates(self) -> dict:
        return {n: (self.n_acc[n] / self.n_prop[n] if self.n_prop[n] else float("nan"))
                for n in MOVE_NAMES}

    def audit(self) -> float:
        """|tracked - from-scratch| for the determinant-free log posterior."""
        ref = log_posterior(self.cube, self.irf, self.cfg, self.field.B, self.hyper,
                            self.prior_only, with_logdet=False)
        return abs(self.lp - ref)

    def _pixel_counts(self) -> np.ndarray:
        out = np.zeros(self.cube.n_pixels, dtype=np.int64)
        nc = self.cube.n_cols
        for (x, y), ids in self.cfg.pixels.items():
            out[x * nc + y] = len(ids)
        return out

    def run(self, n_iter: int | None = None, callback=None) -> RunResult:
        P = self.cube.n_pixels
        if n_iter is None:
            n_iter = self.opts.n_iter
        if n_iter is None:
            n_iter = int(round(self.opts.iters_per_pixel * P))
        burn = n_iter // 2
        every_b = self.opts.background_every or P
        every_s = self.opts.snapshot_every or P
        best_cfg, best_val = None, -math.inf
        snaps: list[np.ndarray] = []
        trace, audits = [], []
        for s in range(n_iter):
            if s == burn:
                best_cfg, best_val = self.cfg.copy(), self.objective()
                self._journal = []
            if s % every_b == 0:
                self.background_sweep()
                if s >= burn:
                    self.field.accumulate()
                trace.append((s, self.objective(), len(self.cfg)))
            self.step()
            if self.opts.audit_every and (s + 1) % self.opts.audit_every == 0:
                audits.append((s + 1, self.audit()))
            if s >= burn:
                val = self.objective()
                if val > best_val:
                    best_val = val
                    _replay(best_cfg, self._journal)
                    self._journal = []
                if (s - burn) % every_s == 0:
                    snaps.append(self._pixel_counts())
            if callback is not None:
                callback(self, s)
        self._journal = None
        if best_cfg is None:
            best_cfg, best_val = self.cfg.copy(), self.objective()
        trace.append((n_iter, self.objective(), len(self.cfg)))
        k_ret = k_return_probabilities(snaps, self.cube.n_rows, self.cube.n_cols) if snaps else None
        acc = {n: (self.n_acc[n], self.n_prop[n]) for n in MOVE_NAMES}
        return RunResult(best_cfg, self.field.estimate() if self.field.acc_count else None,
                         best_val, acc, trace, k_ret, n_iter, burn, audits)

    def fixed_dimension_refine(self, n_iter: int):
        """Shift/mark/background chain from the current state.

        Returns per-point (id, mean t, var t, mean r, var r), where r = e^m and
        the mean of r is the average of e^m over samples.
        """
        saved = self._cum
        probs = np.zeros(len(MOVE_NAMES))
        probs[MOVE_NAMES.index("shift")] = 0.5
        probs[MOVE_NAMES.index("mark")] = 0.5
        self._cum = np.cumsum(probs)
        ids = sorted(self.cfg.points)
        s1t = dict.fromkeys(ids, 0.0); s2t = dict.fromkeys(ids, 0.0)
        s1r = dict.fromkeys(ids, 0.0); s2r = dict.fromkeys(ids, 0.0)
        every_b = self.opts.background_every or self.cube.n_pixels
        try:
            for s in range(n_iter):
                if s % every_b == 0:
                    self.background_sweep()
                self.step()
                for q in ids:
                    p = self.cfg.points[q]
                    r = math.exp(p.m)
                    s1t[q] += p.t; s2t[q] += p.t * p.t
                    s1r[q] += r; s2r[q] += r * r
        finally:
            self._cum = saved
        out = {}
        for q in ids:
            mt, mr = s1t[q] / n_iter, s1r[q] / n_iter
            out[q] = (mt, max(s2t[q] / n_iter - mt * mt, 0.0), mr, max(s2r[q] / n_iter - mr * mr, 0.0))
        return out


def _replay(cfg: PointConfiguration, journal) -> None:
    for removed, added in journal:
        for q in removed:
            cfg.remove(q)
        for p in added:
            cfg.insert(p.x, p.y, p.t, p.m, p.pid)


def _nsums(B):
    from .priors import neighbourhood_sums
    return neighbourhood_sums(B)


def k_return_probabilities(snapshots, n_rows: int, n_cols: int) -> np.ndarray:
    """Empirical P(k points in pixel) from per-pixel count snapshots; shape (n_rows, n_cols, K+1)."""
    counts = np.asarray(snapshots)
    kmax = int(counts.max()) if counts.size else 0
    out = np.zeros((counts.shape[1], kmax + 1))
    for k in range(kmax + 1):
        out[:, k] = (counts == k).mean(axis=0)
    return out.reshape(n_rows, n_cols, kmax + 1)
