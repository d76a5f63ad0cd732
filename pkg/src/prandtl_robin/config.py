"""Run configuration: JSON in, validated dataclasses out."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError, GridError

log = logging.getLogger(__name__)

EXPERIMENTS = ("shear", "mollify", "linearized-mms", "nash-moser", "stability", "dirichlet-limit", "norms-audit")

# experiments whose background must be Robin-compatible beyond order 0
_TANH_DEFAULT = {"linearized-mms", "nash-moser", "stability", "dirichlet-limit"}
# experiments that mollify on the configured grid at the scheduled thetas
_ITERATING = {"nash-moser", "stability", "dirichlet-limit"}


@dataclass
class GridConfig:
    n_t: int = 61
    n_x: int = 24
    n_y: int = 400
    t_max: float = 0.5
    x_len: float = 1.0
    y_max: float = 10.0

    def spec(self):
        from .grid import GridSpec
        return GridSpec(self.n_t, self.n_x, self.n_y, self.t_max, self.x_len, self.y_max)


@dataclass
class ShearConfig:
    family: str | None = None  # None: gaussian-deficit for shear/mollify/norms, tanh otherwise
    sigma: float = 1.0
    beta: float = 1.0
    compatibility_order: int = 2
    table: list | None = None
    scheme: str = "crank-nicolson"

    def init(self, experiment: str | None = None, beta: float | None = None):
        from .shear import ShearInitSpec
        fam = self.family or ("tanh" if experiment in _TANH_DEFAULT else "gaussian-deficit")
        table = tuple(tuple(r) for r in self.table) if self.table is not None else None
        return ShearInitSpec(fam, self.sigma, self.beta if beta is None else beta, self.compatibility_order, table)


@dataclass
class IterationSection:
    theta0: float = 10.0
    k_tilde: int = 7
    k0: int = 2
    epsilon: float = 1e-2
    delta: float = 0.05
    max_iters: int = 30
    residual_tol: float = 1e-4
    norm_k: int = 0
    ell: float = 1.0
    shift_t: int = -1
    stall_window: int = 5
    max_backoff: int = 3

    def build(self):
        from .nash_moser import IterationConfig
        return IterationConfig(**asdict(self))


@dataclass
class StudyConfig:
    """Knobs of the individual experiments."""

    shear_n_t: int = 2000
    shear_betas: list = field(default_factory=lambda: [0.5, 1.0, 5.0])
    exponent_thetas: list = field(default_factory=lambda: [4.0, 6.0, 8.0, 12.0, 16.0])
    mollify_theta: float = 2.0
    mms_levels: int = 3
    stability_forcings: int = 10
    stability_levels: int = 3
    stability_gaps: list = field(default_factory=lambda: [0.0, 2e-3, 1e-3])
    stability_iters: int = 6
    dirichlet_betas: list = field(default_factory=lambda: [10.0, 100.0, 1000.0, 10000.0])
    dirichlet_iters: int = 3
    dirichlet_k0: int = 1
    dirichlet_max_backoff: int = 10
    schedule_j_max: int = 200


@dataclass
class RunConfig:
    grid: GridConfig = field(default_factory=GridConfig)
    shear: ShearConfig = field(default_factory=ShearConfig)
    iteration: IterationSection = field(default_factory=IterationSection)
    study: StudyConfig = field(default_factory=StudyConfig)
    experiment: str | None = None
    output_dir: str = "out"
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {"grid": GridConfig, "shear": ShearConfig, "iteration": IterationSection, "study": StudyConfig}
_SCALARS = {"experiment", "output_dir", "seed"}


def _coerce(name: str, value, default):
    """Type check against the default's type (ints may stand in for floats)."""
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, list):
        ok = isinstance(value, list)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ConfigError(f"{name}: expected {type(default).__name__}, got {type(value).__name__}")
    return value


def _fill(cls, raw: dict, prefix: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"{prefix}: expected an object")
    obj = cls()
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {prefix}: {', '.join(unknown)}")
    for f in fields(cls):
        key = f"{prefix}.{f.name}"
        if f.name in raw:
            setattr(obj, f.name, _coerce(key, raw[f.name], getattr(obj, f.name)))
        else:
            log.info("default %s = %r", key, getattr(obj, f.name))
    return obj


def from_dict(raw: dict, experiment: str | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = sorted(set(raw) - set(_SECTIONS) - _SCALARS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(unknown)}")
    cfg = RunConfig()
    for name, cls in _SECTIONS.items():
        setattr(cfg, name, _fill(cls, raw.get(name, {}), name))
    for name in _SCALARS:
        if name in raw:
            setattr(cfg, name, _coerce(name, raw[name], getattr(cfg, name)) if name == "seed" else raw[name])
        elif not (name == "experiment" and experiment is not None):
            log.info("default %s = %r", name, getattr(cfg, name))
    if experiment is not None:
        cfg.experiment = experiment
    validate(cfg)
    return cfg


def validate(cfg: RunConfig):
    """Check every parameter before any computation.

    Raises GridError for structural problems (the grid cannot carry the
    requested derivatives) and ConfigError for everything else.  Whether the
    schedule thetas are resolved on the grid is only checked for experiments
    that iterate there (or when the experiment is not yet known).
    """
    from .shear import FAMILIES

    if cfg.experiment is not None and cfg.experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown tag {cfg.experiment!r}; valid tags: {', '.join(EXPERIMENTS)}")
    g = cfg.grid
    for name in ("n_t", "n_x", "n_y"):
        if getattr(g, name) < 4:
            raise ConfigError(f"grid.{name} must be at least 4")
    for name in ("t_max", "x_len", "y_max"):
        if not getattr(g, name) > 0:
            raise ConfigError(f"grid.{name} must be positive")
    s = cfg.shear
    if s.family is not None and s.family not in FAMILIES:
        raise ConfigError(f"shear.family: {s.family!r} is not one of {', '.join(FAMILIES)}")
    if not s.sigma > 0:
        raise ConfigError("shear.sigma must be positive")
    if not s.beta > 0:
        raise ConfigError("shear.beta must be positive (the Neumann limit is excluded)")
    if s.scheme not in ("crank-nicolson", "bdf2"):
        raise ConfigError("shear.scheme must be crank-nicolson or bdf2")
    if s.family == "custom-table" and not s.table:
        raise ConfigError("shear.table is required for the custom-table family")
    it = cfg.iteration
    if it.theta0 < 3:
        raise ConfigError(f"iteration.theta0 = {it.theta0} is below the resolvable band (theta0 >= 3)")
    if it.ell < 0:
        raise ConfigError("iteration.ell must be non-negative")
    spec = g.spec()
    it.build().validate(spec, resolve=cfg.experiment is None or cfg.experiment in _ITERATING)
    st = cfg.study
    if len(st.exponent_thetas) < 3:
        raise ConfigError("study.exponent_thetas needs at least 3 values")
    if st.mms_levels < 2 or st.stability_levels < 2:
        raise ConfigError("study.mms_levels and study.stability_levels must be at least 2")
    if any(b <= 0 for b in st.dirichlet_betas + st.shear_betas):
        raise ConfigError("study betas must be positive")
    if st.schedule_j_max < 4:
        raise ConfigError("study.schedule_j_max must be at least 4")
    if not isinstance(cfg.seed, int):
        raise ConfigError("seed must be an integer")
    return cfg


def load_config(path, experiment: str | None = None) -> RunConfig:
    """Read, fill defaults (each logged) and validate a JSON config file.

    experiment overrides the file's own tag before validation.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text()
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return from_dict(raw, experiment)


__all__ = ["EXPERIMENTS", "RunConfig", "GridConfig", "ShearConfig", "IterationSection", "StudyConfig",
           "load_config", "from_dict", "validate", "ConfigError", "GridError"]
