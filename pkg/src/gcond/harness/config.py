"""Experiment configuration: a versioned YAML tree with strict keys.

Unknown keys anywhere in the tree are rejected; a silently ignored typo in a
hyperparameter would make method comparisons meaningless.
"""

from __future__ import annotations

import copy
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from gcond.accumulator import AccumMode
from gcond.conductor import ConductorConfig

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "GCOND_OUTPUT_ROOT"

METHODS = (
    "baseline",
    "pcgrad",
    "cagrad",
    "gradnorm",
    "gcond_sequential",
    "gcond_stochastic",
    "gcond_pure",
    "gcond_as_pcgrad",
)
GCOND_METHODS = tuple(m for m in METHODS if m.startswith("gcond"))
OPTIMIZERS = ("adamw", "lion_lars", "sgd")

_DEFAULT_ACCUMULATION = {
    "gcond_stochastic": AccumMode.STOCHASTIC,
    "gcond_pure": AccumMode.STOCHASTIC,
    "gcond_as_pcgrad": AccumMode.STOCHASTIC,
}


class ConfigError(ValueError):
    pass


@dataclass
class ProblemSpec:
    name: str = "conflicting_quadratics"
    params: dict = field(default_factory=dict)


@dataclass
class OptimizerSpec:
    name: str = "adamw"
    lr: float = 2e-4
    beta1: float | None = None
    beta2: float = 0.95
    weight_decay: float = 0.0
    eps: float = 1e-8
    # lion_lars only
    beta: float = 0.9
    trust_ratio_clip: float = 50.0
    bias_correction: bool = True
    param_blocks: list[int] | None = None


@dataclass
class ExperimentConfig:
    problem: ProblemSpec = field(default_factory=ProblemSpec)
    methods: list[str] = field(default_factory=lambda: ["gcond_sequential"])
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    conductor: ConductorConfig = field(default_factory=ConductorConfig)
    task_weights: list[float] | None = None
    K: int = 24
    N: int | None = None
    total_steps: int = 100
    seeds: list[int] = field(default_factory=lambda: [11, 42, 2025])
    clip_norm: float | None = 50.0
    accumulation: str | None = None
    shuffle_blocks: bool = False
    cagrad_c: float = 0.5
    gradnorm_alpha: float = 1.5
    gradnorm_lr: float = 1e-3
    pcgrad_project_against: str = "original"
    output_dir: str = "runs/experiment"
    name: str = "experiment"
    schema_version: int = SCHEMA_VERSION

    def validate(self) -> None:
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version} (expected {SCHEMA_VERSION})")
        if not self.methods:
            raise ConfigError("at least one method is required")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must be unique")
        if self.optimizer.name not in OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer.name!r}; choose from {', '.join(OPTIMIZERS)}")
        if self.K < 1 or self.total_steps < 1:
            raise ConfigError("K and total_steps must be positive")
        if not self.seeds or any((not isinstance(s, int)) or s < 0 for s in self.seeds):
            raise ConfigError("seeds must be a non-empty list of non-negative integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be unique")
        if self.accumulation is not None:
            try:
                AccumMode(self.accumulation)
            except ValueError:
                raise ConfigError(f"accumulation must be 'sequential' or 'stochastic', got {self.accumulation!r}") from None
        if self.pcgrad_project_against not in ("original", "running"):
            raise ConfigError("pcgrad_project_against must be 'original' or 'running'")
        if not 0.0 <= self.cagrad_c < 1.0:
            raise ConfigError("cagrad_c must be in [0, 1)")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive or null")
        if self.optimizer.beta1 is not None and "gcond_pure" in self.methods and self.optimizer.beta1 <= 0:
            raise ConfigError("gcond_pure needs beta1 > 0 (AdamW keeps its own momentum)")

    def check_tasks(self, n_tasks: int) -> None:
        if self.N is not None and self.N != n_tasks:
            raise ConfigError(f"config says N={self.N} but the problem has {n_tasks} tasks")
        if self.task_weights is not None and len(self.task_weights) != n_tasks:
            raise ConfigError(f"{len(self.task_weights)} task weights for {n_tasks} tasks")
        for m in self.methods:
            if self.accumulation_for(m) == AccumMode.STOCHASTIC and self.K % n_tasks != 0:
                raise ConfigError(f"{m} uses stochastic accumulation, which needs N | K (K={self.K}, N={n_tasks})")
        if "cagrad" in self.methods and n_tasks != 2:
            raise ConfigError("cagrad supports exactly two tasks")

    def weights(self, n_tasks: int) -> tuple[float, ...]:
        if self.task_weights is None:
            return (1.0 / n_tasks,) * n_tasks
        return tuple(float(w) for w in self.task_weights)

    def accumulation_for(self, method: str) -> AccumMode:
        if self.accumulation is not None and method in GCOND_METHODS and method != "gcond_sequential":
            return AccumMode(self.accumulation)
        if method == "gcond_sequential":
            return AccumMode.SEQUENTIAL
        return _DEFAULT_ACCUMULATION.get(method, AccumMode.SEQUENTIAL)

    def conductor_for(self, method: str, n_tasks: int) -> ConductorConfig:
        cfg = copy.deepcopy(self.conductor)
        cfg.task_weights = self.weights(n_tasks)
        if method == "gcond_pure":
            cfg.momentum_beta = 0.0
        return ConductorConfig(**asdict(cfg))

    def optimizer_params(self, method: str) -> dict:
        o = self.optimizer
        if o.name == "sgd":
            return {"lr": o.lr}
        if o.name == "lion_lars":
            return {
                "trust_ratio_coef": o.lr,
                "beta": o.beta,
                "trust_ratio_clip": o.trust_ratio_clip,
                "bias_correction": o.bias_correction,
                "param_blocks": o.param_blocks,
            }
        beta1 = o.beta1
        if beta1 is None:
            # Integrated scheme: the conductor already smooths, AdamW only normalizes
            integrated = method in GCOND_METHODS and method != "gcond_pure"
            beta1 = 0.0 if integrated else 0.9
        return {
            "lr": o.lr,
            "beta1": beta1,
            "beta2": o.beta2,
            "weight_decay": o.weight_decay,
            "eps": o.eps,
        }

    def resolved_output_dir(self) -> Path:
        out = Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            return Path(root) / out
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conductor"] = asdict(self.conductor)
        if d["conductor"]["task_weights"] is not None:
            d["conductor"]["task_weights"] = list(d["conductor"]["task_weights"])
        return d


def _strict(cls, data, path: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(data).__name__}")
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    data = dict(data)
    if "schema_version" not in data:
        raise ConfigError("config is missing schema_version")
    if "method" in data:
        if "methods" in data:
            raise ConfigError("give either 'method' or 'methods', not both")
        data["methods"] = [data.pop("method")]
    problem = _strict(ProblemSpec, data.pop("problem", None), "problem")
    optimizer = _strict(OptimizerSpec, data.pop("optimizer", None), "optimizer")
    conductor_data = data.pop("conductor", None) or {}
    if isinstance(conductor_data, dict) and "task_weights" in conductor_data:
        raise ConfigError("conductor: set task weights at the top level (task_weights)")
    conductor = _strict(ConductorConfig, conductor_data, "conductor")
    cfg = _strict(ExperimentConfig, data, "config")
    cfg.problem, cfg.optimizer, cfg.conductor = problem, optimizer, conductor
    if isinstance(cfg.methods, str):
        cfg.methods = [cfg.methods]
    cfg.validate()
    return cfg


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        data = yaml.safe_load(fh)
    return config_from_dict(data)


def dump_config(cfg: ExperimentConfig, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
