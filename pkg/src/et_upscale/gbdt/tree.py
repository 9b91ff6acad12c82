from __future__ import annotations

import heapq

import numpy as np

from .splitting import find_node_splits


class Tree:
    """Regression tree stored as parallel node arrays.

    Node 0 is the root. ``left[i] == -1`` marks a leaf whose output is
    ``value[i]``. Internal nodes send a row left when its feature value is
    ``<= threshold`` and NaN rows toward ``nan_left``.
    """

    __slots__ = ("feature", "threshold", "nan_left", "left", "right", "value", "gain", "count")

    def __init__(self, feature, threshold, nan_left, left, right, value, gain, count):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.nan_left = np.asarray(nan_left, dtype=bool)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)
        self.gain = np.asarray(gain, dtype=float)
        self.count = np.asarray(count, dtype=np.int64)

    @classmethod
    def leaf(cls, value, count):
        return cls([-1], [np.nan], [True], [-1], [-1], [value], [0.0], [count])

    def __len__(self):
        return self.value.size

    @property
    def is_leaf(self):
        return self.left < 0

    @property
    def n_leaves(self):
        return int(self.is_leaf.sum())

    def scaled(self, factor):
        """Copy with every leaf output multiplied by ``factor``."""
        return Tree(
            self.feature, self.threshold, self.nan_left, self.left, self.right,
            self.value * factor, self.gain, self.count,
        )

    def apply(self, X):
        """Leaf index reached by every row of ``X``."""
        X = np.asarray(X, dtype=float)
        node = np.zeros(X.shape[0], dtype=np.int64)
        idx = np.arange(X.shape[0])
        while idx.size:
            cur = node[idx]
            internal = self.left[cur] >= 0
            idx, cur = idx[internal], cur[internal]
            if not idx.size:
                break
            x = X[idx, self.feature[cur]]
            go_left = np.where(np.isnan(x), self.nan_left[cur], x <= self.threshold[cur])
            node[idx] = np.where(go_left, self.left[cur], self.right[cur])
        return node

    def predict(self, X):
        return self.value[self.apply(X)]

    def depth(self):
        depth = np.zeros(len(self), dtype=np.int64)
        for i in range(len(self)):
            if self.left[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())


class _Builder:
    def __init__(self):
        self.nodes = []

    def add(self, rows, residuals, depth):
        self.nodes.append(
            dict(feature=-1, threshold=np.nan, nan_left=True, left=-1, right=-1,
                 value=float(np.mean(residuals[rows])), gain=0.0, count=len(rows), depth=depth)
        )
        return len(self.nodes) - 1

    def tree(self):
        cols = ("feature", "threshold", "nan_left", "left", "right", "value", "gain", "count")
        return Tree(*[[n[c] for n in self.nodes] for c in cols])


def _partition(data, rows, split):
    col = data.codes[rows, split.feature]
    go_left = np.where(col == data.nan_bin, split.nan_left, col <= split.bin)
    return rows[go_left], rows[~go_left]


def grow_tree(data, residuals, rows, features, config):
    """Fit one squared-error tree to ``residuals`` on the given rows.

    ``data`` is a :class:`~et_upscale.gbdt.binning.BinnedData`; ``rows`` and
    ``features`` are the row and column subsets already drawn for this
    tree. Leaf-wise growth always splits the leaf with the largest gain
    until ``config.num_leaves`` leaves exist; depth-wise growth splits a
    whole level at a time down to ``config.max_depth``. Leaves predict the
    mean residual of their rows.
    """
    residuals = np.asarray(residuals, dtype=float)
    rows = np.asarray(rows, dtype=np.int64)
    b = _Builder()
    root = b.add(rows, residuals, 0)
    node_rows = {root: rows}
    max_depth = config.max_depth or np.inf

    def splits_for(ids):
        ids = [i for i in ids if b.nodes[i]["depth"] < max_depth]
        found = find_node_splits(
            data, residuals, [node_rows[i] for i in ids], features,
            config.min_child_weight, config.min_gain,
        )
        return dict(zip(ids, found))

    def apply_split(i, split):
        left_rows, right_rows = _partition(data, node_rows.pop(i), split)
        depth = b.nodes[i]["depth"] + 1
        left = b.add(left_rows, residuals, depth)
        right = b.add(right_rows, residuals, depth)
        node_rows[left], node_rows[right] = left_rows, right_rows
        b.nodes[i].update(
            feature=split.feature, threshold=split.threshold, nan_left=split.nan_left,
            left=left, right=right, gain=split.gain,
        )
        return left, right

    if config.growth == "leafwise":
        heap = []
        n_leaves = 1

        def push(ids):
            for i, split in splits_for(ids).items():
                if split is not None:
                    heapq.heappush(heap, (-split.gain, i, split))

        if config.num_leaves > 1:
            push([root])
        while heap and n_leaves < config.num_leaves:
            _, i, split = heapq.heappop(heap)
            push(apply_split(i, split))
            n_leaves += 1
    else:
        frontier = [root]
        while frontier:
            found = splits_for(frontier)
            frontier = []
            for i in sorted(found):
                if found[i] is not None:
                    frontier.extend(apply_split(i, found[i]))
    return b.tree()
