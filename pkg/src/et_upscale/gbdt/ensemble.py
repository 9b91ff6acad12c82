from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..errors import SchemaMismatchError
from ..features import FeatureSchema, FeatureVector
from .binning import BinnedData
from .config import TrainConfig
from .tree import Tree, grow_tree

log = logging.getLogger(__name__)


@dataclass
class Ensemble:
    """A fitted boosted or bagged tree ensemble.

    Boosted: ``base_score + sum(tree outputs)`` with the learning rate
    already folded into the leaves. Bagged: the mean of the tree outputs,
    or ``base_score`` when there are no trees.
    """

    base_score: float
    trees: list
    config: TrainConfig
    n_features: int
    schema: FeatureSchema | None = None
    train_rmse: list = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise SchemaMismatchError(
                f"expected {self.n_features} features, got array of shape {X.shape}"
            )
        if self.config.mode == "bagged" and self.trees:
            out = np.zeros(X.shape[0])
            for tree in self.trees:
                out += tree.predict(X)
            return out / len(self.trees)
        out = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            out += tree.predict(X)
        return out


def _draw(rng, n, frac, replace=False):
    if replace:
        return np.sort(rng.integers(0, n, size=max(1, int(round(frac * n)))))
    if frac >= 1.0:
        return np.arange(n)
    k = max(1, int(frac * n))
    return np.sort(rng.choice(n, size=k, replace=False))


def fit_arrays(X, y, config: TrainConfig, schema: FeatureSchema | None = None) -> Ensemble:
    """Train on a dense matrix (NaN allowed) and a target vector."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0] or X.shape[0] == 0:
        raise ValueError("X must be a non-empty 2-D array matching y")
    if not np.all(np.isfinite(y)):
        raise ValueError("targets must be finite")
    if schema is not None and len(schema) != X.shape[1]:
        raise SchemaMismatchError("schema length does not match feature count")
    n, n_feat = X.shape
    base = float(np.mean(y))
    model = Ensemble(base, [], config, n_feat, schema)
    if n < 2:
        warnings.warn("a single training row only supports a base-score model", UserWarning)
        return model

    data = BinnedData(X, config.max_bins)
    rng = np.random.default_rng(config.seed)
    pred = np.full(n, base)
    bagged = config.mode == "bagged"
    for t in range(config.n_estimators):
        features = _draw(rng, n_feat, config.colsample)
        if bagged:
            rows = _draw(rng, n, config.subsample, replace=True)
            tree = grow_tree(data, y, rows, features, config)
        else:
            rows = _draw(rng, n, config.subsample)
            tree = grow_tree(data, y - pred, rows, features, config)
            tree = tree.scaled(config.learning_rate)
            pred = pred + tree.predict(X)
            model.train_rmse.append(float(np.sqrt(np.mean((y - pred) ** 2))))
        model.trees.append(tree)
        log.debug("tree %d: %d leaves", t, tree.n_leaves)
    if bagged and model.trees:
        model.train_rmse.append(float(np.sqrt(np.mean((y - model.predict(X)) ** 2))))
    return model


def fit(table, config: TrainConfig) -> Ensemble:
    """Train on a :class:`~et_upscale.ingest.DatasetTable`."""
    if len(table) == 0:
        raise ValueError("cannot fit an empty table")
    return fit_arrays(table.X, table.y, config, table.schema)


def predict(ensemble: Ensemble, vector) -> float:
    """Prediction for one feature vector (W m-2 for the ET models)."""
    if isinstance(vector, FeatureVector):
        if ensemble.schema is not None and vector.schema.digest != ensemble.schema.digest:
            raise SchemaMismatchError("feature vector schema differs from the model schema")
        vector = vector.values
    return float(ensemble.predict(np.asarray(vector, dtype=float)[None, :])[0])


@dataclass(frozen=True)
class ImportanceReport:
    """Total split gain and split count per used feature, largest gain first.

    ``exact_gain`` keeps the per-feature totals as exact fractions so that
    conservation of the ensemble's total gain can be checked without
    rounding.
    """

    features: tuple[int, ...]
    names: tuple[str, ...]
    gain: tuple[float, ...]
    splits: tuple[int, ...]
    exact_gain: tuple[Fraction, ...]

    def __len__(self):
        return len(self.features)

    def rows(self):
        return list(zip(self.names, self.gain, self.splits))


def node_gains(ensemble: Ensemble):
    """(feature, gain) for every internal node of every tree."""
    out = []
    for tree in ensemble.trees:
        internal = ~tree.is_leaf
        out.extend(zip(tree.feature[internal].tolist(), tree.gain[internal].tolist()))
    return out


def feature_importance_gain(ensemble: Ensemble) -> ImportanceReport:
    totals: dict[int, Fraction] = {}
    counts: dict[int, int] = {}
    for feat, gain in node_gains(ensemble):
        totals[feat] = totals.get(feat, Fraction(0)) + Fraction(gain)
        counts[feat] = counts.get(feat, 0) + 1
    order = sorted(totals, key=lambda f: (-totals[f], f))
    if ensemble.schema is not None:
        names = tuple(ensemble.schema.names[f] for f in order)
    else:
        names = tuple(f"f{f}" for f in order)
    return ImportanceReport(
        features=tuple(order),
        names=names,
        gain=tuple(float(totals[f]) for f in order),
        splits=tuple(counts[f] for f in order),
        exact_gain=tuple(totals[f] for f in order),
    )
