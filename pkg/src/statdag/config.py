"""Run configuration: one JSON document with sections data, prior, sampler, projection, threshold."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError
from .priors import PriorConfig
from .projection import Algorithm1Config
from .sampler import SamplerConfig
from .series import SCALINGS
from .synth import KERNELS

MODES = ("bayes", "anotears")
ANGLE_PRIORS = ("normal", "beta")


@dataclass(frozen=True)
class DataConfig:
    """Simulation design plus the scaling applied before fitting."""

    p: int = 10
    S: int = 3
    T: int = 48
    expected_neighbors: float = 2.0
    kernel: str = "exponential"
    seed: int = 0
    replicates: int = 1
    scaling: str = "global"


@dataclass(frozen=True)
class ProjectionSection:
    zeta: float = 1.0
    folds: int = 5
    grid_size: int = 50
    max_draws: int | None = 100
    alpha: float = 0.0
    rho: float = 1.0


@dataclass(frozen=True)
class ThresholdSection:
    H: float = 0.3


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    projection: ProjectionSection = field(default_factory=ProjectionSection)
    threshold: ThresholdSection = field(default_factory=ThresholdSection)
    chains: int = 1
    mode: str = "bayes"

    def algorithm1(self, jobs: int = 1) -> Algorithm1Config:
        pr = self.projection
        return Algorithm1Config(H=self.threshold.H, zeta=pr.zeta, folds=pr.folds, grid_size=pr.grid_size,
                                max_draws=pr.max_draws, alpha=pr.alpha, rho=pr.rho, jobs=jobs)

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


SECTIONS = {
    "data": DataConfig,
    "prior": PriorConfig,
    "sampler": SamplerConfig,
    "projection": ProjectionSection,
    "threshold": ThresholdSection,
}

_TOP_LEVEL = {"chains": int, "mode": str}


def _coerce(value, default, name: str):
    """Check ``value`` against the type of the field default."""
    kind = type(default)
    if default is None:
        if value is None or (isinstance(value, int) and not isinstance(value, bool)):
            return value
        raise ConfigError("expected an integer or null", field=name)
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError("expected true or false", field=name)
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("expected an integer", field=name)
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("expected a number", field=name)
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError("expected a string", field=name)
        return value
    return value


def _section(cls, doc, name: str):
    if not isinstance(doc, dict):
        raise ConfigError("section must be a JSON object", field=name)
    defaults = cls()
    known = {f.name for f in fields(cls)}
    values = {}
    for key, value in doc.items():
        if key not in known:
            raise ConfigError("unknown field", field=f"{name}.{key}")
        values[key] = _coerce(value, getattr(defaults, key), f"{name}.{key}")
    try:
        return replace(defaults, **values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field=name) from exc


def _positive(value, name: str, allow_zero: bool = False):
    if value is None:
        return
    if value < 0 or (value == 0 and not allow_zero):
        raise ConfigError("must be positive" if not allow_zero else "must be nonnegative", field=name)


def validate(cfg: RunConfig) -> RunConfig:
    d, s, pr, proj = cfg.data, cfg.sampler, cfg.prior, cfg.projection
    if d.kernel not in KERNELS:
        raise ConfigError(f"unknown kernel {d.kernel!r}; choose from {list(KERNELS)}", field="data.kernel")
    if d.scaling not in SCALINGS:
        raise ConfigError(f"unknown scaling {d.scaling!r}; choose from {list(SCALINGS)}", field="data.scaling")
    if d.p < 2:
        raise ConfigError("need at least 2 variables", field="data.p")
    for name in ("S", "replicates"):
        _positive(getattr(d, name), f"data.{name}")
    if d.T < 4:
        raise ConfigError("need at least 4 time points", field="data.T")
    if not 0 <= d.expected_neighbors < d.p:
        raise ConfigError("must lie in [0, p)", field="data.expected_neighbors")
    if s.iterations < 1:
        raise ConfigError("must be positive", field="sampler.iterations")
    if not 0 <= s.burnin < s.iterations:
        raise ConfigError("must lie in [0, iterations)", field="sampler.burnin")
    _positive(s.thin, "sampler.thin")
    if s.J < s.degree + 1:
        raise ConfigError(f"must be at least degree + 1 = {s.degree + 1}", field="sampler.J")
    _positive(s.R, "sampler.R")
    for name in ("init_mala_step", "init_rw_scale"):
        _positive(getattr(s, name), f"sampler.{name}")
    for name in ("target_rw", "target_mala"):
        if not 0 < getattr(s, name) < 1:
            raise ConfigError("must lie in (0, 1)", field=f"sampler.{name}")
    if pr.truncation < 2:
        raise ConfigError("must be at least 2", field="prior.truncation")
    if pr.angle_prior not in ANGLE_PRIORS:
        raise ConfigError(f"choose from {list(ANGLE_PRIORS)}", field="prior.angle_prior")
    if not 0 <= pr.lambda_lo < pr.lambda_hi <= 3.141592653589793 / 2 + 1e-12:
        raise ConfigError("need 0 <= lambda_lo < lambda_hi <= pi/2", field="prior.lambda_hi")
    for name in ("mu_d_prior_sd", "a_v", "b_v", "sigma_t2", "beta_a", "kappa1", "kappa2", "nu1", "c1", "diff_ridge"):
        _positive(getattr(pr, name), f"prior.{name}")
    if proj.folds < 2:
        raise ConfigError("need at least 2 folds", field="projection.folds")
    _positive(proj.grid_size, "projection.grid_size")
    _positive(proj.max_draws, "projection.max_draws")
    _positive(proj.rho, "projection.rho")
    _positive(proj.alpha, "projection.alpha", allow_zero=True)
    _positive(proj.zeta, "projection.zeta", allow_zero=True)
    _positive(cfg.threshold.H, "threshold.H", allow_zero=True)
    _positive(cfg.chains, "chains")
    if cfg.mode not in MODES:
        raise ConfigError(f"choose from {list(MODES)}", field="mode")
    return cfg


def from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    values = {}
    for key, value in doc.items():
        if key in SECTIONS:
            values[key] = _section(SECTIONS[key], value, key)
        elif key in _TOP_LEVEL:
            values[key] = _coerce(value, getattr(RunConfig(), key), key)
        else:
            raise ConfigError("unknown section", field=key)
    return validate(RunConfig(**values))


def load(path: str | Path | None) -> RunConfig:
    """Parse and validate a JSON config file (``None`` gives the defaults).

    Raises:
        ConfigError: with the offending field or line.
    """
    if path is None:
        return validate(RunConfig())
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc
    try:
        return from_dict(doc)
    except ConfigError as exc:
        if exc.field is None or exc.line is not None:
            raise
        raise ConfigError(str(exc).rsplit(" (", 1)[0], field=exc.field, line=_locate(text, exc.field)) from None


def _locate(text: str, dotted: str) -> int | None:
    """Line of the innermost key of ``dotted`` in the JSON text, if found."""
    pos = 0
    for key in dotted.split("."):
        hit = text.find(f'"{key}"', pos)
        if hit < 0:
            return None
        pos = hit
    return text.count("\n", 0, pos) + 1


def override(cfg: RunConfig, *, iterations=None, burnin=None, thin=None, chains=None, H=None,
             mode=None, seed=None) -> RunConfig:
    """Apply command-line overrides and re-validate."""
    sampler = cfg.sampler
    changes = {k: v for k, v in {"iterations": iterations, "burnin": burnin, "thin": thin}.items() if v is not None}
    if changes:
        sampler = replace(sampler, **changes)
    data = cfg.data if seed is None else replace(cfg.data, seed=seed)
    threshold = cfg.threshold if H is None else replace(cfg.threshold, H=H)
    return validate(replace(cfg, sampler=sampler, data=data, threshold=threshold,
                            chains=cfg.chains if chains is None else chains,
                            mode=cfg.mode if mode is None else mode))


def schema() -> dict:
    """Every section with its fields, defaults and value types."""
    out = {}
    for name, cls in SECTIONS.items():
        inst = cls()
        out[name] = {f.name: {"default": getattr(inst, f.name),
                              "type": "integer or null" if getattr(inst, f.name) is None
                              else type(getattr(inst, f.name)).__name__}
                     for f in fields(cls)}
    out["chains"] = {"default": 1, "type": "int"}
    out["mode"] = {"default": "bayes", "type": "str", "choices": list(MODES)}
    out["data"]["kernel"]["choices"] = list(KERNELS)
    out["data"]["scaling"]["choices"] = list(SCALINGS)
    out["prior"]["angle_prior"]["choices"] = list(ANGLE_PRIORS)
    return out
