"""Training configuration: TOML files with per-problem defaults.

A config file must name its ``problem``; every other field falls back to the
bundled defaults for that problem (``configs/<problem>.toml``). Unknown keys
are rejected so typos cannot silently fall back to defaults.
"""

from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .loss import COUPLINGS, STRATEGIES, LossWeights
from .measures import VARIANTS
from .networks import ACTIVATIONS


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid config:\n  " + "\n  ".join(problems))


@dataclass
class ArchitectureConfig:
    hidden_layers: int = 5
    hidden_width: int = 32
    activation: str = "snake"
    pce_degree: int = 5
    galerkin_degree_x: int = 8
    galerkin_degree_t: int = 8


@dataclass
class OptimizerConfig:
    lr: float = 1.0
    max_inner_iterations: int = 20
    history_size: int = 20


@dataclass
class ResampleConfig:
    domain_period: int = 50
    param_period: int = 100


@dataclass
class BatchConfig:
    n_x: int = 20
    n_t: int = 10
    n_xi: int = 100
    n_boundary: int = 20
    n_initial: int = 20
    strategy: str = "cartesian_product"
    coupling: str = "product"


@dataclass
class SeedConfig:
    init: int = 0
    domain: int = 1
    params: int = 2
    test: int = 3


@dataclass
class WeightConfig:
    interior: float = 1.0
    boundary: float = 1.0
    initial: float = 1.0

    def to_weights(self) -> LossWeights:
        return LossWeights(self.interior, self.boundary, self.initial)


SECTIONS = {
    "architecture": ArchitectureConfig,
    "optimizer": OptimizerConfig,
    "resample": ResampleConfig,
    "batch": BatchConfig,
    "seeds": SeedConfig,
    "weights": WeightConfig,
}
TOP_LEVEL = {"problem": str, "variant": str, "outer_iterations": int,
             "checkpoint_every": int, "output_dir": str}


@dataclass
class TrainConfig:
    problem: str
    variant: str = "fullnn"
    outer_iterations: int = 600
    checkpoint_every: int = 100
    output_dir: str = "runs/default"
    architecture: ArchitectureConfig = field(default_factory=ArchitectureConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    resample: ResampleConfig = field(default_factory=ResampleConfig)
    batch: BatchConfig = field(default_factory=BatchConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    weights: WeightConfig = field(default_factory=WeightConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_toml(self) -> str:
        return dump_toml(self.to_dict())

    def replace(self, **changes) -> "TrainConfig":
        """Copy with top-level or ``section__field`` overrides."""
        data = self.to_dict()
        for key, value in changes.items():
            if "__" in key:
                section, name = key.split("__", 1)
                data[section][name] = value
            else:
                data[key] = value
        return from_dict(data, use_defaults=False)


def default_dict(problem: str) -> dict:
    text = resources.files("neural_measures").joinpath("configs", f"{problem}.toml").read_text()
    return tomllib.loads(text)


def bundled_config_path(problem: str) -> Path:
    return Path(str(resources.files("neural_measures").joinpath("configs", f"{problem}.toml")))


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _type_ok(value, kind) -> bool:
    if kind is float:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is int:
        return isinstance(value, int) and not isinstance(value, bool)
    return isinstance(value, kind)


def from_dict(data: dict, use_defaults: bool = True) -> TrainConfig:
    """Validate a nested dict and build a config, reporting every problem at once."""
    from .problems import PROBLEMS

    errors: list[str] = []
    if "problem" not in data:
        raise ConfigError(["problem: required field is missing"])
    problem = data["problem"]
    if problem not in PROBLEMS:
        raise ConfigError([f"problem: unknown problem {problem!r}; choose from {sorted(PROBLEMS)}"])
    if use_defaults:
        data = _merge(default_dict(problem), data)

    kwargs: dict[str, Any] = {}
    for key, value in data.items():
        if key in TOP_LEVEL:
            if not _type_ok(value, TOP_LEVEL[key]):
                errors.append(f"{key}: expected {TOP_LEVEL[key].__name__}, got {value!r}")
                continue
            kwargs[key] = value
        elif key in SECTIONS:
            if not isinstance(value, dict):
                errors.append(f"{key}: expected a section")
                continue
            cls = SECTIONS[key]
            known = {f.name: f.type for f in fields(cls)}
            section = {}
            for name, item in value.items():
                if name not in known:
                    errors.append(f"{key}.{name}: unknown key")
                    continue
                kind = known[name]
                if isinstance(kind, str):
                    kind = {"int": int, "float": float, "str": str}[kind]
                if not _type_ok(item, kind):
                    errors.append(f"{key}.{name}: expected {kind.__name__}, got {item!r}")
                    continue
                section[name] = float(item) if kind is float else item
            kwargs[key] = cls(**section)
        else:
            errors.append(f"{key}: unknown key")
    # fields with structural errors fall back to defaults so the value checks still run
    cfg = TrainConfig(**kwargs)
    errors.extend(validate(cfg))
    if errors:
        raise ConfigError(errors)
    return cfg


def validate(cfg: TrainConfig) -> list[str]:
    errors = []
    if cfg.variant not in VARIANTS:
        errors.append(f"variant: must be one of {VARIANTS}, got {cfg.variant!r}")
    for name in ("outer_iterations", "checkpoint_every"):
        if getattr(cfg, name) < 1:
            errors.append(f"{name}: must be >= 1")
    a = cfg.architecture
    for name in ("hidden_layers", "hidden_width"):
        if getattr(a, name) < 1:
            errors.append(f"architecture.{name}: must be >= 1")
    for name in ("pce_degree", "galerkin_degree_x", "galerkin_degree_t"):
        if getattr(a, name) < 0:
            errors.append(f"architecture.{name}: must be >= 0")
    if a.activation not in ACTIVATIONS:
        errors.append(f"architecture.activation: must be one of {ACTIVATIONS}")
    if not cfg.optimizer.lr > 0:
        errors.append("optimizer.lr: must be > 0")
    for name in ("max_inner_iterations", "history_size"):
        if getattr(cfg.optimizer, name) < 1:
            errors.append(f"optimizer.{name}: must be >= 1")
    for name in ("domain_period", "param_period"):
        if getattr(cfg.resample, name) < 1:
            errors.append(f"resample.{name}: must be >= 1")
    b = cfg.batch
    for name in ("n_x", "n_t", "n_xi", "n_boundary", "n_initial"):
        if getattr(b, name) < 1:
            errors.append(f"batch.{name}: must be >= 1")
    if b.strategy not in STRATEGIES:
        errors.append(f"batch.strategy: must be one of {STRATEGIES}")
    if b.coupling not in COUPLINGS:
        errors.append(f"batch.coupling: must be one of {COUPLINGS}")
    w = cfg.weights
    vals = (w.interior, w.boundary, w.initial)
    if any(v < 0 for v in vals) or not any(v > 0 for v in vals):
        errors.append("weights: must be >= 0 with at least one > 0")
    return errors


def load_config(path, overrides: Optional[dict] = None) -> TrainConfig:
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    if overrides:
        data = _merge(data, overrides)
    return from_dict(data)


def default_config(problem: str, **changes) -> TrainConfig:
    cfg = from_dict({"problem": problem})
    return cfg.replace(**changes) if changes else cfg


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, float):
        return repr(v)
    return str(v)


def dump_toml(data: dict) -> str:
    lines = [f"{k} = {_toml_value(v)}" for k, v in data.items() if not isinstance(v, dict)]
    for k, v in data.items():
        if isinstance(v, dict):
            lines.append("")
            lines.append(f"[{k}]")
            lines.extend(f"{name} = {_toml_value(item)}" for name, item in v.items())
    return "\n".join(lines) + "\n"
