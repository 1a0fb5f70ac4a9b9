"""Experiment configuration: flat ``key=value`` files plus overrides.

Every value is validated before any training starts. Errors carry the source
line when the value came from a file.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Optional

from .ffnn import ConstantInit, UniformInit
from .neural_form import VARIANTS
from .problems import PROBLEMS
from .training import ConfigError, TrainingConfig

__all__ = ["EXPERIMENTS", "ExperimentConfig", "parse_config_text", "load_config", "resolve", "dump_config"]

EXPERIMENTS = (
    "epochs-sweep",
    "domain-size",
    "training-points",
    "scaling-table",
    "cnf-vs-scnf",
    "order-sweep",
    "subdomain-sweep",
    "subdomain-error",
    "rigid-body",
)

SMOKE_EPOCHS = 1000
FULL_EPOCHS = 100_000


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    problem: str
    variant: str = "TSM"
    orders: tuple = (1, 2, 3, 4, 5)
    hidden: int = 5
    ntp: tuple = (10,)
    subdomains: tuple = (1,)
    subdomain_points: int = 10
    t_end: tuple = (2.0,)
    init: str = "const"
    init_value: float = -10.0
    init_lo: float = -10.5
    init_hi: float = -9.5
    seed: int = 0
    repeats: int = 1
    epochs: int = SMOKE_EPOCHS
    batch: str = "FB"
    incremental: bool = False
    penalise_invariants: bool = False
    independent_init: bool = False
    workers: int = 1
    out: str = ""

    def training(self, seed_offset: int = 0) -> TrainingConfig:
        if self.init == "const":
            init = ConstantInit(self.init_value)
        else:
            init = UniformInit(self.init_lo, self.init_hi, self.seed + seed_offset)
        return TrainingConfig(epochs=self.epochs, batch_mode=self.batch, incremental=self.incremental,
                              init=init, penalise_invariants=self.penalise_invariants)


# reference settings per experiment; ``epochs`` stays at the smoke default
DEFAULTS: dict[str, dict] = {
    "epochs-sweep": dict(problem="dahlquist", batch="FB"),
    "domain-size": dict(problem="dahlquist", t_end=(0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0)),
    "training-points": dict(problem="dahlquist", ntp=(5, 10, 20, 30, 40, 50)),
    "scaling-table": dict(problem="oscillating", orders=(1,), init="uniform", init_lo=-0.5, init_hi=0.5,
                          repeats=10, incremental=True, t_end=(1.0, 2.0, 3.0, 4.0), init_value=0.0),
    "cnf-vs-scnf": dict(problem="oscillating", orders=(3,), t_end=(15.0,), init_value=0.0,
                        init_lo=-0.5, init_hi=0.5, subdomains=(100,), ntp=(1000,), hidden=5),
    "order-sweep": dict(problem="oscillating", orders=(1, 2, 3), t_end=(15.0,), init_value=0.0,
                        init_lo=-0.5, init_hi=0.5, subdomains=(60,), incremental=True),
    "subdomain-sweep": dict(problem="oscillating", orders=(3,), t_end=(15.0,), init_value=0.0,
                            init_lo=-0.5, init_hi=0.5, subdomains=(10, 50, 100, 200, 300, 400),
                            incremental=True),
    "subdomain-error": dict(problem="oscillating", orders=(1, 3, 5), t_end=(15.0,), init_value=0.0,
                            init_lo=-0.5, init_hi=0.5, subdomains=(100,), incremental=True),
    "rigid-body": dict(problem="rigid_body", orders=(3,), t_end=(30.0,), init_value=0.0,
                       init_lo=-0.5, init_hi=0.5, subdomains=(40,), incremental=True,
                       penalise_invariants=True),
}

_TUPLE_INT = {"orders", "ntp", "subdomains"}
_TUPLE_FLOAT = {"t_end"}
_BOOL = {"incremental", "penalise_invariants", "independent_init"}
_INT = {"hidden", "subdomain_points", "seed", "repeats", "epochs", "workers"}
_FLOAT = {"init_value", "init_lo", "init_hi"}
FIELD_NAMES = tuple(f.name for f in fields(ExperimentConfig))


def _parse_int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        value = float(raw)  # accepts 1e5
        if not value.is_integer():
            raise ValueError(f"not an integer: {raw!r}") from None
        return int(value)


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    try:
        if key in _TUPLE_INT:
            vals = tuple(_parse_int(v.strip()) for v in raw.split(",") if v.strip())
            if not vals:
                raise ValueError("empty list")
            return vals
        if key in _TUPLE_FLOAT:
            vals = tuple(float(v) for v in raw.split(",") if v.strip())
            if not vals:
                raise ValueError("empty list")
            return vals
        if key in _BOOL:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if key in _INT:
            return _parse_int(raw)
        if key in _FLOAT:
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"invalid value for {key}: {exc}") from None
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key=value`` lines; ``#`` starts a comment."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in FIELD_NAMES:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _parse_value(key, raw)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return values


def load_config(path) -> dict:
    path = Path(path)
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


def parse_overrides(pairs) -> dict:
    values = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override {pair!r} is not key=value")
        key, raw = (s.strip() for s in pair.split("=", 1))
        if key not in FIELD_NAMES:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    return values


def resolve(experiment: Optional[str], file_values: dict, overrides: dict) -> ExperimentConfig:
    """Merge experiment defaults, file values and overrides (overrides win), then validate."""
    merged = {**file_values, **overrides}
    if experiment is not None:
        if merged.get("experiment", experiment) != experiment:
            raise ConfigError(f"config names experiment {merged['experiment']!r}, command asked for {experiment!r}")
        merged["experiment"] = experiment
    name = merged.get("experiment")
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; choose from {', '.join(EXPERIMENTS)}")
    base = dict(DEFAULTS[name])
    base.update(merged)
    cfg = ExperimentConfig(**base)
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    def bad(msg):
        raise ConfigError(msg)

    if cfg.problem not in PROBLEMS:
        bad(f"unknown problem {cfg.problem!r}")
    if cfg.variant not in VARIANTS:
        bad(f"variant must be one of {VARIANTS}")
    if any(m < 1 or m > 12 for m in cfg.orders):
        bad("orders must lie in 1..12")
    if cfg.hidden < 1 or cfg.hidden > 1000:
        bad("hidden must lie in 1..1000")
    if any(n < 2 for n in cfg.ntp):
        bad("ntp values must be >= 2")
    if any(h < 1 for h in cfg.subdomains):
        bad("subdomains must be >= 1")
    if cfg.subdomain_points < 2:
        bad("subdomain_points must be >= 2")
    if any(not math.isfinite(t) or t <= 0.0 for t in cfg.t_end):
        bad("t_end values must be positive and finite")
    if cfg.init not in ("const", "uniform"):
        bad("init must be const or uniform")
    for name in ("init_value", "init_lo", "init_hi"):
        if not math.isfinite(getattr(cfg, name)):
            bad(f"{name} must be finite")
    if cfg.init == "uniform" and cfg.init_lo >= cfg.init_hi:
        bad("init_lo must be < init_hi")
    if not 0 <= cfg.seed < 2 ** 63:
        bad("seed must be a non-negative 63-bit integer")
    if cfg.repeats < 1:
        bad("repeats must be >= 1")
    if cfg.epochs < 0:
        bad("epochs must be >= 0")
    if cfg.batch not in ("SB", "FB"):
        bad("batch must be SB or FB")
    if cfg.workers < 1:
        bad("workers must be >= 1")
    if cfg.penalise_invariants and cfg.problem != "rigid_body":
        bad("penalise_invariants needs a problem with invariants (rigid_body)")
    if cfg.experiment == "rigid-body" and cfg.problem != "rigid_body":
        bad("the rigid-body experiment needs problem=rigid_body")
    if cfg.experiment != "rigid-body" and cfg.problem == "rigid_body":
        bad(f"{cfg.experiment} needs a scalar problem with a closed-form solution")
    if cfg.experiment in ("order-sweep", "subdomain-sweep", "subdomain-error", "rigid-body", "cnf-vs-scnf") \
            and len(cfg.t_end) != 1:
        bad(f"{cfg.experiment} takes a single t_end")


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dump_config(cfg: ExperimentConfig) -> str:
    return "".join(f"{name}={_fmt(getattr(cfg, name))}\n" for name in FIELD_NAMES)


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    new = replace(cfg, **changes)
    validate(new)
    return new
