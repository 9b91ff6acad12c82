from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Mapping

from ..errors import ConfigError


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for :func:`et_upscale.gbdt.fit`.

    ``min_gain`` plays the role of XGBoost's ``gamma``; ``min_child_weight``
    is a minimum row count per child since all hessians are 1. Column
    sampling is drawn once per tree. ``max_depth=0`` means unlimited, and
    ``num_leaves`` only constrains leaf-wise growth.
    """

    mode: str = "boosted"
    growth: str = "leafwise"
    n_estimators: int = 100
    learning_rate: float = 0.1
    num_leaves: int = 31
    max_depth: int = 0
    min_child_weight: int = 1
    min_gain: float = 0.0
    colsample: float = 1.0
    subsample: float = 1.0
    max_bins: int = 255
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("boosted", "bagged"):
            raise ConfigError(f"mode must be 'boosted' or 'bagged', got {self.mode!r}")
        if self.growth not in ("leafwise", "depthwise"):
            raise ConfigError(f"growth must be 'leafwise' or 'depthwise', got {self.growth!r}")
        for name in ("n_estimators", "num_leaves", "max_depth", "min_child_weight", "max_bins", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{name} must be an integer, got {value!r}")
        if self.n_estimators < 0:
            raise ConfigError("n_estimators must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError("learning_rate must lie in (0, 1]")
        if self.num_leaves < 1:
            raise ConfigError("num_leaves must be >= 1")
        if self.max_depth < 0:
            raise ConfigError("max_depth must be >= 0")
        if self.min_child_weight < 1:
            raise ConfigError("min_child_weight must be >= 1")
        if not self.min_gain >= 0:
            raise ConfigError("min_gain must be >= 0")
        for name in ("colsample", "subsample"):
            if not 0 < getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in (0, 1]")
        if not 2 <= self.max_bins <= 65535:
            raise ConfigError("max_bins must lie in [2, 65535]")
        if self.seed < 0:
            raise ConfigError("seed must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(doc) - known)
        if unknown:
            raise ConfigError(f"unknown training keys: {', '.join(unknown)}")
        return cls(**doc)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def lightgbm_config(**overrides) -> TrainConfig:
    """Leaf-wise boosting: 80 leaves, learning rate 0.05, 70% of columns per
    tree. Unstated settings use LightGBM defaults (100 rounds, 20 rows per leaf)."""
    base = dict(
        mode="boosted", growth="leafwise", num_leaves=80, learning_rate=0.05,
        colsample=0.7, n_estimators=100, min_child_weight=20,
    )
    return TrainConfig(**{**base, **overrides})


def xgboost_config(**overrides) -> TrainConfig:
    """Depth-wise boosting with the tuned XGBoost settings."""
    base = dict(
        mode="boosted", growth="depthwise", learning_rate=0.1, max_depth=14,
        min_child_weight=5, min_gain=0.6, colsample=0.9, subsample=0.8,
        n_estimators=100,
    )
    return TrainConfig(**{**base, **overrides})


def random_forest_config(**overrides) -> TrainConfig:
    """Bagged depth-wise trees: 100 trees of depth at most 22."""
    base = dict(mode="bagged", growth="depthwise", n_estimators=100, max_depth=22)
    return TrainConfig(**{**base, **overrides})
