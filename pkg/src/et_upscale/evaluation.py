"""Error metrics, grouped k-fold cross-validation and grid search.

Aggregates are unweighted means over folds; the spread reported with them
is the standard error across folds, ``std(values, ddof=1) / sqrt(n)``.
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidKError
from .features import IGBP_NAMES
from .gbdt import TrainConfig, fit_arrays
from .physics import LE_TO_MM_DAY

DEFAULT_K = 5


@dataclass(frozen=True)
class Metrics:
    mae: float
    rmse: float
    r2: float

    def to_dict(self):
        return {"mae": self.mae, "rmse": self.rmse, "r2": self.r2}


def metrics(y_true, y_pred) -> Metrics:
    """MAE, RMSE and the residual form of R².

    R² is NaN when the observed values have zero variance.
    """
    y_true = np.asarray(y_true, dtype=float).ravel()
    y_pred = np.asarray(y_pred, dtype=float).ravel()
    if y_true.size == 0 or y_true.shape != y_pred.shape:
        raise ValueError(f"need two equal nonzero lengths, got {y_true.size} and {y_pred.size}")
    if not (np.all(np.isfinite(y_true)) and np.all(np.isfinite(y_pred))):
        raise ValueError("metrics need finite values")
    resid = y_true - y_pred
    mae = float(np.mean(np.abs(resid)))
    rmse = float(np.sqrt(np.mean(resid * resid)))
    ss_res = float(np.sum(resid * resid))
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else math.nan
    return Metrics(mae, rmse, r2)


@dataclass(frozen=True)
class FoldPlan:
    """Assignment of every group key to one of ``k`` folds."""

    k: int
    assignment: dict

    def folds(self):
        """Group keys of each fold, in first-assigned order."""
        out = [[] for _ in range(self.k)]
        for group, fold in self.assignment.items():
            out[fold].append(group)
        return out

    def fold_of(self, groups) -> np.ndarray:
        return np.array([self.assignment[g] for g in groups], dtype=np.int64)

    def splits(self, groups):
        """Yield ``(train_idx, valid_idx)`` row indices for each fold."""
        fold = self.fold_of(groups)
        for f in range(self.k):
            yield np.flatnonzero(fold != f), np.flatnonzero(fold == f)


def group_kfold(groups, k=DEFAULT_K) -> FoldPlan:
    """Size-balanced, deterministic assignment of whole groups to folds.

    Distinct groups are sorted by descending row count (ties broken by
    key) and each goes to the fold with the fewest rows so far, the lowest
    fold index winning ties.
    """
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)):
        raise InvalidKError(f"k must be an integer, got {k!r}")
    sizes: dict = {}
    for g in groups:
        sizes[g] = sizes.get(g, 0) + 1
    if k < 2 or k > len(sizes):
        raise InvalidKError(f"k must lie in [2, {len(sizes)}] for {len(sizes)} groups, got {k}")
    load = [0] * k
    assignment = {}
    for g in sorted(sizes, key=lambda g: (-sizes[g], g)):
        f = min(range(k), key=lambda i: (load[i], i))
        assignment[g] = f
        load[f] += sizes[g]
    return FoldPlan(int(k), assignment)


@dataclass(frozen=True)
class StratumSummary:
    """RMSE of one month or biome stratum: mean and SE over the folds that
    contain it. ``se`` is 0 when only one fold contains the stratum."""

    mean: float
    se: float
    n_folds: int


def _mean_se(values):
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


@dataclass
class EvalReport:
    k: int
    folds: list
    fold_sizes: list
    month_rmse: dict = field(default_factory=dict)
    igbp_rmse: dict = field(default_factory=dict)

    def _agg(self, name):
        return _mean_se([getattr(m, name) for m in self.folds])

    @property
    def mean(self) -> Metrics:
        return Metrics(*(self._agg(n)[0] for n in ("mae", "rmse", "r2")))

    @property
    def se(self) -> Metrics:
        return Metrics(*(self._agg(n)[1] for n in ("mae", "rmse", "r2")))

    @staticmethod
    def _summaries(per_fold):
        out = {}
        for key, values in per_fold.items():
            present = [v for v in values if v is not None]
            if present:
                out[key] = StratumSummary(*_mean_se(present), len(present))
        return out

    @property
    def per_month(self):
        """``{month: StratumSummary}`` for months seen in any validation fold."""
        return self._summaries(self.month_rmse)

    @property
    def per_igbp(self):
        return self._summaries(self.igbp_rmse)

    def to_dict(self):
        mean, se = self.mean, self.se

        def strata(summaries, label):
            return {
                str(label(key)): {
                    "rmse": s.mean,
                    "se": s.se,
                    "rmse_mm_day": s.mean * LE_TO_MM_DAY,
                    "se_mm_day": s.se * LE_TO_MM_DAY,
                    "n_folds": s.n_folds,
                }
                for key, s in sorted(summaries.items())
            }

        return {
            "k": self.k,
            "aggregate": {
                "mean": mean.to_dict(),
                "se": se.to_dict(),
                "rmse_mm_day": mean.rmse * LE_TO_MM_DAY,
                "mae_mm_day": mean.mae * LE_TO_MM_DAY,
            },
            "folds": [dict(m.to_dict(), n=n) for m, n in zip(self.folds, self.fold_sizes)],
            "per_month": strata(self.per_month, int),
            "per_igbp": strata(self.per_igbp, lambda c: IGBP_NAMES.get(c, c)),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def write_json(self, path):
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    def csv_rows(self):
        """Flat rows: one per fold overall, then per fold and stratum."""
        rows = []
        for f, (m, n) in enumerate(zip(self.folds, self.fold_sizes)):
            rows.append([f, "all", "", n, m.mae, m.rmse, m.r2, m.rmse * LE_TO_MM_DAY])
        for kind, table, label in (
            ("month", self.month_rmse, int),
            ("igbp", self.igbp_rmse, lambda c: IGBP_NAMES.get(c, c)),
        ):
            for key in sorted(table):
                for f, value in enumerate(table[key]):
                    if value is not None:
                        rows.append([f, kind, label(key), "", "", value, "", value * LE_TO_MM_DAY])
        return rows

    def write_csv(self, path):
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fold", "stratum_type", "stratum", "n", "mae", "rmse", "r2", "rmse_mm_day"])
            w.writerows(self.csv_rows())


def _strata_rmse(keys, y, pred):
    out = {}
    for key in np.unique(keys):
        mask = keys == key
        out[int(key)] = float(np.sqrt(np.mean((y[mask] - pred[mask]) ** 2)))
    return out


def cross_validate(table, config: TrainConfig, k=DEFAULT_K, n_jobs=1) -> EvalReport:
    """Grouped k-fold cross-validation on a DatasetTable.

    Folds may run on ``n_jobs`` threads; the report does not depend on it.
    """
    if len(table) == 0:
        raise ValueError("cannot cross-validate an empty table")
    plan = group_kfold(table.groups, k)
    splits = list(plan.splits(table.groups))

    def run(split):
        train, valid = split
        model = fit_arrays(table.X[train], table.y[train], config, table.schema)
        pred = model.predict(table.X[valid])
        y = table.y[valid]
        return (
            metrics(y, pred),
            len(valid),
            _strata_rmse(table.months[valid], y, pred),
            _strata_rmse(table.igbp[valid], y, pred),
        )

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, splits))
    else:
        results = [run(s) for s in splits]

    report = EvalReport(k=plan.k, folds=[r[0] for r in results], fold_sizes=[r[1] for r in results])
    for attr, pos in (("month_rmse", 2), ("igbp_rmse", 3)):
        keys = sorted(set().union(*(r[pos] for r in results)))
        setattr(report, attr, {key: [r[pos].get(key) for r in results] for key in keys})
    return report


@dataclass
class GridSearchResult:
    best_index: int
    configs: list
    reports: list

    @property
    def best(self) -> TrainConfig:
        return self.configs[self.best_index]

    @property
    def best_report(self) -> EvalReport:
        return self.reports[self.best_index]

    def rows(self):
        out = []
        for cfg, rep in zip(self.configs, self.reports):
            mean, se = rep.mean, rep.se
            out.append(dict(cfg.to_dict(), rmse=mean.rmse, rmse_se=se.rmse, mae=mean.mae, r2=mean.r2))
        return out

    def write_csv(self, path):
        rows = self.rows()
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)


def expand_grid(config_grid: dict, base: TrainConfig | None = None) -> list:
    """Cartesian product of per-parameter value lists, in the given order
    (last parameter varying fastest)."""
    base = TrainConfig() if base is None else base
    if not config_grid or any(len(v) == 0 for v in config_grid.values()):
        raise ConfigError("grid search needs a nonempty list for every parameter")
    names = list(config_grid)
    unknown = [n for n in names if n not in base.to_dict()]
    if unknown:
        raise ConfigError(f"unknown training keys in grid: {', '.join(unknown)}")
    return [base.replace(**dict(zip(names, combo))) for combo in itertools.product(*config_grid.values())]


def grid_search(table, config_grid: dict, k=DEFAULT_K, base=None, n_jobs=1) -> GridSearchResult:
    """Exhaustive search; the best config has the lowest mean CV RMSE, the
    earliest grid point winning ties."""
    configs = expand_grid(config_grid, base)
    reports = [cross_validate(table, cfg, k, n_jobs) for cfg in configs]
    best = 0
    for i, rep in enumerate(reports):
        if rep.mean.rmse < reports[best].mean.rmse:
            best = i
    return GridSearchResult(best, configs, reports)
