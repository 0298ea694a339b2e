"""Run configuration as plain dataclasses, loadable from a JSON document.

Config file schema (every key optional; unknown keys are rejected)::

    {
      "corpus": "path/to/corpus", "out": "runs/exp1", "seed": 0,
      "models": ["gbdt", "mlp"], "ablate": null | "diff",
      "reps": 5000, "ci_reps": 10000, "threshold": 0.5,
      "ablation_drops_cov_diff": true,
      "features":  {"decay": 0.8, "window": 10, "ewma_alpha": 0.3},
      "rebalance": {"k": 5, "oversample_ratio": 0.5, "target_ratio": 1.0},
      "gbdt": {...TrainConfig keys...},
      "mlp":  {...TrainConfig keys...},
      "synth": {...SynthConfig keys...}
    }
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .errors import InputError


@dataclass(frozen=True)
class FeatureConfig:
    decay: float = 0.8
    window: int = 10
    ewma_alpha: float = 0.3

    def __post_init__(self):
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must be in (0, 1)")
        if not 0.0 < self.ewma_alpha < 1.0:
            raise ValueError("ewma_alpha must be in (0, 1)")
        if self.window < 1:
            raise ValueError("window must be >= 1")


@dataclass(frozen=True)
class RebalanceConfig:
    k: int = 5
    oversample_ratio: float = 0.5
    target_ratio: float = 1.0


@dataclass(frozen=True)
class TrainConfig:
    rounds: int = 200           # boosting rounds (gbdt) or epochs (mlp)
    max_depth: int = 4
    learning_rate: float = 0.1
    l2: float = 1.0
    min_child_weight: float = 1.0
    pos_weight: float | None = None   # None: #neg/#pos of the training rows
    hidden: tuple[int, ...] = (32, 16)
    batch_size: int = 32
    patience: int = 20
    validation_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 0 or self.max_depth < 1 or self.batch_size < 1:
            raise ValueError("rounds must be >= 0, max_depth and batch_size >= 1")
        if self.learning_rate <= 0 or self.l2 < 0 or self.min_child_weight < 0:
            raise ValueError("learning_rate must be > 0; l2 and min_child_weight >= 0")
        if self.pos_weight is not None and self.pos_weight <= 0:
            raise ValueError("pos_weight must be positive")
        if not 0.0 <= self.validation_fraction <= 0.5:
            raise ValueError("validation_fraction must be in [0, 0.5]")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))


def default_gbdt_config() -> TrainConfig:
    return TrainConfig()


def default_mlp_config() -> TrainConfig:
    return TrainConfig(rounds=200, learning_rate=1e-3, patience=20, validation_fraction=0.1)


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic multi-project corpus; see :mod:`commitprio.synth`."""
    projects: int = 5
    commits: int = 40
    suites: int = 30
    degenerate_commits: int = 3
    degenerate_suites: int = 6
    helpers_per_suite: int = 7
    unmapped_suites: int = 1
    uncovered_suites: int = 1
    beta0: float = -4.0
    beta1: float = 6.0
    beta2: float = 0.5
    noise: float = 0.1
    fragility: float = 0.2
    hot_skew: float = 0.6
    extra_files_rate: float = 0.15
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    corpus: str | None = None
    out: str = "runs/experiment"
    seed: int = 0
    models: tuple[str, ...] = ("gbdt", "mlp")
    ablate: str | None = None
    reps: int = 5000
    ci_reps: int = 10000
    threshold: float = 0.5
    ablation_drops_cov_diff: bool = True
    features: FeatureConfig = field(default_factory=FeatureConfig)
    rebalance: RebalanceConfig = field(default_factory=RebalanceConfig)
    gbdt: TrainConfig = field(default_factory=default_gbdt_config)
    mlp: TrainConfig = field(default_factory=default_mlp_config)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def __post_init__(self):
        bad = [m for m in self.models if m not in ("gbdt", "mlp")]
        if bad:
            raise ValueError(f"unknown model(s) {bad}")
        if self.ablate not in (None, "diff"):
            raise ValueError("ablate must be null or 'diff'")
        object.__setattr__(self, "models", tuple(self.models))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


_NESTED = {
    "features": FeatureConfig,
    "rebalance": RebalanceConfig,
    "gbdt": TrainConfig,
    "mlp": TrainConfig,
    "synth": SynthConfig,
}


def _build(cls, data: dict[str, Any], base=None):
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise InputError(f"unknown config key(s) for {cls.__name__}: {unknown}")
    base = base if base is not None else cls()
    try:
        return replace(base, **data)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid {cls.__name__}: {exc}") from None


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    data = dict(data)
    base = ExperimentConfig()
    nested = {}
    for key, cls in _NESTED.items():
        if key in data:
            sub = data.pop(key)
            if not isinstance(sub, dict):
                raise InputError(f"config key {key!r} must be an object")
            nested[key] = _build(cls, sub, getattr(base, key))
    if "models" in data:
        data["models"] = tuple(data["models"])
    return _build(ExperimentConfig, {**data, **nested}, base)


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.is_file():
        raise InputError(f"missing file: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: {exc}") from None
    return config_from_dict(data)
