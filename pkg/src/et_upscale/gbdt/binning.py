"""Quantile binning of feature columns for histogram split search."""
from __future__ import annotations

import numpy as np


def build_bins(column, max_bins=255) -> np.ndarray:
    """Interior bin edges for one feature column.

    With at most ``max_bins`` distinct values the edges are the midpoints
    between consecutive distinct values, so binning loses nothing. Otherwise
    ``max_bins - 1`` edges are placed at empirical quantiles. NaN values are
    ignored here; they go to a reserved bin.
    """
    col = np.asarray(column, dtype=float)
    values = col[~np.isnan(col)]
    distinct = np.unique(values)
    if distinct.size <= 1:
        return np.empty(0)
    if distinct.size <= max_bins:
        return (distinct[:-1] + distinct[1:]) / 2.0
    qs = np.arange(1, max_bins) / max_bins
    return np.unique(np.quantile(values, qs))


def bin_column(column, edges, nan_bin) -> np.ndarray:
    """Bin index of every value: ``x <= edges[b]`` exactly when the bin is <= b."""
    col = np.asarray(column, dtype=float)
    dtype = np.uint8 if nan_bin < 256 else np.uint16
    out = np.searchsorted(edges, col, side="left").astype(dtype)
    out[np.isnan(col)] = nan_bin
    return out


class BinnedData:
    """Binned copy of a feature matrix plus the edges used to make it.

    Bins ``0..len(edges[f])`` hold real values of feature ``f``; index
    ``max_bins`` is reserved for NaN in every column.
    """

    def __init__(self, X, max_bins=255):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError("feature matrix must be 2-D")
        self.max_bins = max_bins
        self.nan_bin = max_bins
        self.n_hist = max_bins + 1
        self.edges = [build_bins(X[:, j], max_bins) for j in range(X.shape[1])]
        self.n_edges = np.array([e.size for e in self.edges], dtype=np.int64)
        if X.shape[1]:
            self.codes = np.column_stack(
                [bin_column(X[:, j], self.edges[j], self.nan_bin) for j in range(X.shape[1])]
            )
        else:
            self.codes = np.empty((X.shape[0], 0), dtype=np.uint8)

    @property
    def shape(self):
        return self.codes.shape
