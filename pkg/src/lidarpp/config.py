"""Configuration dataclasses for the model, the sampler and the scale schedule."""
from __future__ import annotations

import configparser
import dataclasses
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

MOVE_NAMES = ("birth", "death", "dilation", "erosion", "shift", "mark", "split", "merge")


@dataclass
class HyperParameters:
    """Fixed model constants for one scale.

    ``n_b`` is the half depth (in bins) of the cuboid of influence and ``l_z``
    converts a depth difference in bins into pixel units for the GMRF distance.
    ``strauss=False`` switches the hard-core term off (used by prior tests).
    ``area_scale`` is the area-interaction measure of one isolated cuboid;
    set differences are counted in units of cuboid / area_scale. None means
    n_p, i.e. one unit is a slab of the cuboid one pixel wide.
    """

    gamma_a: float = math.e ** 3
    lambda_a: float = 1.0
    d_min: float = 19.0
    n_p: int = 3
    n_b: int = 9
    sigma2: float = 0.36 / 3
    beta: float | None = None
    alpha_b: float = 2.0
    l_z: float = 3.0
    strauss: bool = True
    area_scale: float | None = None

    def __post_init__(self):
        if self.beta is None:
            self.beta = self.sigma2 / 100.0
        if self.area_scale is None:
            self.area_scale = float(self.n_p)
        self.validate()

    def validate(self):
        if self.gamma_a < 1:
            raise ValueError(f"gamma_a must be >= 1, got {self.gamma_a}")
        if self.lambda_a <= 0:
            raise ValueError("lambda_a must be positive")
        if self.n_p != 3:
            raise ValueError("only n_p = 3 (8-neighbour pixels) is supported")
        if self.n_b < 1:
            raise ValueError("n_b must be a positive integer")
        if self.sigma2 <= 0 or self.beta <= 0 or self.l_z <= 0:
            raise ValueError("sigma2, beta and l_z must be positive")
        if self.alpha_b < 1:
            raise ValueError("alpha_b must be >= 1")
        if self.area_scale <= 0:
            raise ValueError("area_scale must be positive")
        if self.strauss:
            if not self.d_min > 2 * self.n_b:
                raise ValueError(f"d_min ({self.d_min}) must exceed 2*n_b ({2 * self.n_b})")
        elif self.d_min < 0:
            raise ValueError("d_min must be non-negative")

    @property
    def hard_core(self) -> float:
        return self.d_min if self.strauss else 0.0

    @property
    def log_gamma(self) -> float:
        """Log attraction per unit of cuboid-normalized uncovered volume."""
        return math.log(self.gamma_a) * self.area_scale

    @classmethod
    def for_scale(cls, n_rows: int, n_cols: int, window: int, bin_width: float,
                  pixel_pitch: float, fine: bool, **overrides) -> "HyperParameters":
        """Default constants for a scale whose pixels are ``window`` fine pixels wide."""
        l_z = window * pixel_pitch / bin_width
        n_b = max(1, int(round(3 * l_z)))
        base = dict(
            gamma_a=math.e ** 3 if fine else math.e ** 2,
            lambda_a=float(n_rows * n_cols) ** 1.5,
            d_min=2 * n_b + 1,
            n_b=n_b,
            sigma2=0.36 / 3 if fine else 0.36,
            alpha_b=2.0,
            l_z=l_z,
        )
        base.update(overrides)
        if "sigma2" in overrides and "beta" not in overrides:
            base["beta"] = None
        return cls(**base)


@dataclass
class MoveTable:
    """Move-selection probabilities, normalized on construction."""

    birth: float = 1.0
    death: float = 1.0
    dilation: float = 5.0
    erosion: float = 5.0
    shift: float = 5.0
    mark: float = 5.0
    split: float = 1.0
    merge: float = 1.0

    def __post_init__(self):
        w = [getattr(self, n) for n in MOVE_NAMES]
        if any(x < 0 for x in w) or sum(w) <= 0:
            raise ValueError("move weights must be non-negative with a positive sum")
        s = float(sum(w))
        for n, x in zip(MOVE_NAMES, w):
            setattr(self, n, x / s)
        # reversible pairs must be enabled together
        for a, b in (("birth", "death"), ("dilation", "erosion"), ("split", "merge")):
            if (getattr(self, a) > 0) != (getattr(self, b) > 0):
                raise ValueError(f"{a} and {b} must be both enabled or both disabled")

    def probabilities(self) -> list[float]:
        return [getattr(self, n) for n in MOVE_NAMES]

    def without(self, *names: str) -> "MoveTable":
        w = {n: (0.0 if n in names else getattr(self, n)) for n in MOVE_NAMES}
        return MoveTable(**w)


@dataclass
class SamplerOptions:
    """Chain length and bookkeeping cadence.

    ``None`` fields are resolved from the cube size when the chain starts:
    iterations default to 25 per pixel, the background sweep and the k-return
    snapshot both run every ``n_rows * n_cols`` iterations.
    """

    n_iter: int | None = None
    iters_per_pixel: float = 25.0
    background_every: int | None = None
    snapshot_every: int | None = None
    shift_scale: float | None = None   # std of the depth random walk, default n_b/3
    mark_scale: float = 0.5            # std of the log-intensity random walk
    poisson_threshold: int = 100
    logdet: str = "local"              # "local" window or "exact" components
    prior_only: bool = False
    audit_every: int = 0

    def __post_init__(self):
        if self.logdet not in ("local", "exact"):
            raise ValueError("logdet must be 'local' or 'exact'")
        if self.n_iter is not None and self.n_iter < 0:
            raise ValueError("n_iter must be non-negative")


@dataclass
class ScaleSchedule:
    """Binning windows from coarse to fine, e.g. (3, 1).

    ``threshold_sigma`` sets the prior-support threshold on the coarsest cube
    in background standard deviations of the log-matched response.
    """

    windows: tuple[int, ...] = (3, 1)
    threshold_sigma: float = 0.5
    use_threshold: bool = True

    def __post_init__(self):
        self.windows = tuple(int(w) for w in self.windows)
        if not self.windows:
            raise ValueError("at least one scale is required")
        if self.windows[-1] != 1:
            raise ValueError("the last scale must have window 1")
        if any(a <= b for a, b in zip(self.windows, self.windows[1:])):
            raise ValueError("windows must be strictly decreasing")
        if any(w < 1 for w in self.windows):
            raise ValueError("windows must be positive")

    @classmethod
    def with_scales(cls, k: int, **kw) -> "ScaleSchedule":
        return cls(windows=tuple(3 ** (k - 1 - i) for i in range(k)), **kw)


@dataclass
class RunConfig:
    """Everything needed to reproduce one CLI invocation."""

    seed: int = 0
    schedule: ScaleSchedule = field(default_factory=ScaleSchedule)
    moves: MoveTable = field(default_factory=MoveTable)
    sampler: SamplerOptions = field(default_factory=SamplerOptions)
    coarse: dict[str, Any] = field(default_factory=dict)   # HyperParameters overrides
    fine: dict[str, Any] = field(default_factory=dict)
    scene: dict[str, Any] = field(default_factory=dict)
    jobs: int = 1


def _coerce(text: str, like: Any):
    if text.strip().lower() == "none":
        return None
    if isinstance(like, bool) or like in ("true", "false"):
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {text!r}")
    if isinstance(like, int) and not isinstance(like, bool):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, tuple):
        return tuple(int(x) for x in text.replace(",", " ").split())
    # untyped: try int, then float, then raw string
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text.strip()


_HYPER_TYPES = {f.name: f.type for f in dataclasses.fields(HyperParameters)}
_HYPER_DEFAULTS = {"gamma_a": 1.0, "lambda_a": 1.0, "d_min": 1.0, "n_p": 1, "n_b": 1,
                   "sigma2": 1.0, "beta": 1.0, "alpha_b": 1.0, "l_z": 1.0, "strauss": True,
                   "area_scale": 1.0}


def _apply_section(obj, section, name):
    for key, text in section.items():
        if not hasattr(obj, key):
            raise ValueError(f"unknown key [{name}] {key}")
        cur = getattr(obj, key)
        like = cur
        if cur is None:
            ftype = {f.name: f.type for f in dataclasses.fields(obj)}[key]
            like = 0 if "int" in str(ftype) else 0.0
        setattr(obj, key, _coerce(text, like))
    if hasattr(obj, "__post_init__"):
        obj.__post_init__()


def load_run_config(path: str | Path | None, base: RunConfig | None = None) -> RunConfig:
    """Read an INI file with sections [run], [schedule], [moves], [sampler],
    [coarse], [fine] and [scene]; missing sections keep their defaults."""
    cfg = base if base is not None else RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    for name in parser.sections():
        sec = parser[name]
        if name == "run":
            for key, text in sec.items():
                if key not in ("seed", "jobs"):
                    raise ValueError(f"unknown key [run] {key}")
                setattr(cfg, key, int(text))
        elif name == "schedule":
            kw = dataclasses.asdict(cfg.schedule)
            for key, text in sec.items():
                if key not in kw:
                    raise ValueError(f"unknown key [schedule] {key}")
                kw[key] = _coerce(text, kw[key])
            cfg.schedule = ScaleSchedule(**kw)
        elif name == "moves":
            kw = dataclasses.asdict(cfg.moves)
            for key, text in sec.items():
                if key not in kw:
                    raise ValueError(f"unknown key [moves] {key}")
                kw[key] = float(text)
            cfg.moves = MoveTable(**kw)
        elif name == "sampler":
            _apply_section(cfg.sampler, sec, name)
        elif name in ("coarse", "fine"):
            target = getattr(cfg, name)
            for key, text in sec.items():
                if key not in _HYPER_TYPES:
                    raise ValueError(f"unknown key [{name}] {key}")
                target[key] = _coerce(text, _HYPER_DEFAULTS[key])
        elif name == "scene":
            for key, text in sec.items():
                cfg.scene[key] = _coerce(text, None)
        elif name == "command" or name.startswith("scale"):
            continue   # informational sections of a config echo
        else:
            raise ValueError(f"unknown section [{name}]")
    return cfg


def dump_run_config(cfg: RunConfig, extra: dict[str, dict[str, Any]] | None = None) -> str:
    """Render the fully resolved configuration in the same INI layout."""
    parser = configparser.ConfigParser()
    parser["run"] = {"seed": str(cfg.seed), "jobs": str(cfg.jobs)}
    sched = dataclasses.asdict(cfg.schedule)
    sched["windows"] = " ".join(str(w) for w in cfg.schedule.windows)
    parser["schedule"] = {k: str(v) for k, v in sched.items()}
    parser["moves"] = {k: repr(v) for k, v in dataclasses.asdict(cfg.moves).items()}
    parser["sampler"] = {k: (repr(v) if isinstance(v, float) else str(v))
                         for k, v in dataclasses.asdict(cfg.sampler).items()}
    parser["coarse"] = {k: repr(v) for k, v in cfg.coarse.items()}
    parser["fine"] = {k: repr(v) for k, v in cfg.fine.items()}
    parser["scene"] = {k: str(v) for k, v in cfg.scene.items()}
    for name, sec in (extra or {}).items():
        parser[name] = {k: (repr(v) if isinstance(v, float) else str(v)) for k, v in sec.items()}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
