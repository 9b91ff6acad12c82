"""Split search for squared-error trees.

With unit hessians a histogram bucket is just (sum of residuals, row
count), and the gain of a split is the variance reduction

    G_L**2 / n_L + G_R**2 / n_R - G**2 / n

Rows with a missing value are tried on both sides; the better side becomes
the node's default direction. Ties resolve to the lowest feature, then the
lowest bin, then NaN-left.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Upper bound on histogram cells materialised at once in batched search.
_CHUNK_CELLS = 1 << 21


@dataclass(frozen=True)
class SplitCandidate:
    feature: int
    bin: int
    threshold: float
    nan_left: bool
    gain: float
    n_left: int
    n_right: int


def build_histograms(codes, gradients, n_hist):
    """Per-feature (gradient-sum, count) histograms for one node.

    ``codes`` is the node's binned rows restricted to the candidate
    features, shape (rows, features). Returns two arrays of shape
    (features, n_hist). Bucket sums accumulate in row order.
    """
    g, n = build_histograms_batch(codes, gradients, np.zeros(len(codes), np.int64), 1, n_hist)
    return g[0], n[0]


def build_histograms_batch(codes, gradients, node_ids, n_nodes, n_hist):
    n_rows, n_feat = codes.shape
    flat = (
        (node_ids[:, None] * n_feat + np.arange(n_feat)[None, :]) * n_hist
        + codes.astype(np.int64)
    ).ravel()
    size = n_nodes * n_feat * n_hist
    weights = np.repeat(np.asarray(gradients, dtype=float), n_feat)
    g = np.bincount(flat, weights=weights, minlength=size).reshape(n_nodes, n_feat, n_hist)
    n = np.bincount(flat, minlength=size).reshape(n_nodes, n_feat, n_hist)
    return g, n


def _scan(hist_g, hist_n, legal_boundary, min_child_weight):
    """Gain of every (boundary, NaN side) for histograms shaped (..., n_hist).

    The last bucket is the NaN bucket; boundary ``b`` sends real buckets
    ``0..b`` left. ``legal_boundary`` (shape (..., n_hist - 2)) masks the
    boundaries that correspond to an actual bin edge. Returns gains shaped
    (..., n_hist - 2, 2), side 0 being NaN-left, with illegal candidates at
    -inf, plus the matching left counts.
    """
    real_g, nan_g = hist_g[..., :-1], hist_g[..., -1:]
    real_n, nan_n = hist_n[..., :-1], hist_n[..., -1:]
    cum_g = np.cumsum(real_g, axis=-1)
    cum_n = np.cumsum(real_n, axis=-1)
    total_g = cum_g[..., -1:] + nan_g
    total_n = cum_n[..., -1:] + nan_n

    left_real_g = cum_g[..., :-1]
    left_real_n = cum_n[..., :-1]
    n = total_n
    g = total_g
    parent = g * g / n
    gains, lefts = [], []
    with np.errstate(divide="ignore", invalid="ignore"):
        for gl, nl in ((left_real_g + nan_g, left_real_n + nan_n), (left_real_g, left_real_n)):
            gr = g - gl
            nr = n - nl
            gain = gl * gl / nl + gr * gr / nr - parent
            ok = legal_boundary & (nl >= min_child_weight) & (nr >= min_child_weight)
            gains.append(np.where(ok, gain, -np.inf))
            lefts.append(nl)
    gain = np.stack(gains, axis=-1)
    nl = np.stack(lefts, axis=-1)
    return gain, nl


def _dense_legal(n_edges, n_hist):
    return np.arange(n_hist - 2)[None, :] < np.asarray(n_edges)[:, None]


def _compressed_histograms(codes, gradients, node_ids, n_nodes, n_hist):
    """Histograms holding only the occupied buckets of each (node, feature).

    Returns gradient sums and counts shaped (nodes, features, width) with
    the NaN bucket in the last column, and the dense bin index of every
    real column (``n_hist`` where a column is padding). Scanning these
    gives exactly the dense result: skipped buckets are empty, so they add
    nothing to the prefix sums, and an equal-gain run of boundaries resolves
    to its lowest bin in both layouts.
    """
    n_rows, n_feat = codes.shape
    nan_bin = n_hist - 1
    keys = (
        (node_ids[:, None] * n_feat + np.arange(n_feat)[None, :]) * n_hist
        + codes.astype(np.int64)
    ).ravel()
    uniq, inv = np.unique(keys, return_inverse=True)
    sums = np.bincount(inv, weights=np.repeat(np.asarray(gradients, float), n_feat))
    counts = np.bincount(inv)
    seg = uniq // n_hist
    bins = uniq % n_hist
    is_nan = bins == nan_bin
    starts = np.searchsorted(seg, np.arange(n_nodes * n_feat))
    pos = np.arange(uniq.size) - starts[seg]
    real_per_seg = np.bincount(seg[~is_nan], minlength=n_nodes * n_feat)
    width = int(real_per_seg.max(initial=0)) + 2
    col = np.where(is_nan, width - 1, pos)
    hg = np.zeros((n_nodes * n_feat, width))
    hn = np.zeros((n_nodes * n_feat, width), dtype=np.int64)
    occ = np.full((n_nodes * n_feat, width - 1), n_hist, dtype=np.int64)
    hg[seg, col] = sums
    hn[seg, col] = counts
    occ[seg[~is_nan], col[~is_nan]] = bins[~is_nan]
    shape = (n_nodes, n_feat)
    return hg.reshape(*shape, width), hn.reshape(*shape, width), occ.reshape(*shape, width - 1)


def _pick(gain, nl, n_total, features, edges, min_gain, bin_of=None):
    """Best candidate over features for one node (rows of ``gain``).

    ``bin_of`` maps compressed boundary columns back to dense bin indices.
    """
    n_feat = gain.shape[0]
    flat = gain.reshape(n_feat, -1)
    per_feat = flat.argmax(axis=1)
    best = flat[np.arange(n_feat), per_feat]
    f = int(np.argmax(best))
    value = float(best[f])
    if not (value > 0.0 and value >= min_gain):
        return None
    b, side = divmod(int(per_feat[f]), 2)
    if bin_of is not None:
        b = int(bin_of[f, b])
    n_left = int(nl.reshape(n_feat, -1)[f, per_feat[f]])
    feat = int(features[f])
    return SplitCandidate(
        feature=feat,
        bin=b,
        threshold=float(edges[feat][b]),
        nan_left=side == 0,
        gain=value,
        n_left=n_left,
        n_right=int(n_total) - n_left,
    )


def best_split(grad_hist, count_hist, edges, min_child_weight=1, min_gain=0.0):
    """Best split from one feature's histogram, or None.

    ``grad_hist``/``count_hist`` hold one bucket per bin with the NaN bucket
    last; ``edges`` are the feature's interior bin edges. A split needs
    positive gain of at least ``min_gain`` and ``min_child_weight`` rows on
    each side.
    """
    hg = np.asarray(grad_hist, dtype=float)
    hn = np.asarray(count_hist, dtype=np.int64)
    edges = np.asarray(edges, dtype=float)
    if hg.size < 2 or hn.sum() == 0 or edges.size == 0:
        return None
    if edges.size > hg.size - 2:
        raise ValueError("histogram has fewer bins than the edges imply")
    legal = _dense_legal([edges.size], hg.size)
    gain, nl = _scan(hg[None], hn[None], legal, max(min_child_weight, 1))
    return _pick(gain, nl, hn.sum(), [0], [edges], min_gain)


def find_node_splits(data, gradients, node_rows, features, min_child_weight, min_gain):
    """Best split (or None) for each row set in ``node_rows``.

    Large nodes use dense histograms, small ones compressed histograms of
    their occupied buckets; both give identical candidates. Nodes are
    processed in chunks so memory stays bounded.
    """
    features = np.asarray(features, dtype=np.int64)
    out = [None] * len(node_rows)
    if features.size == 0:
        return out
    n_hist = data.n_hist
    n_edges = data.n_edges[features]
    mcw = max(min_child_weight, 1)
    todo = [i for i, rows in enumerate(node_rows) if len(rows) >= 2 * mcw]
    small_cut = n_hist
    dense = [i for i in todo if len(node_rows[i]) > small_cut]
    small = [i for i in todo if len(node_rows[i]) <= small_cut]

    def gather(ids):
        rows = np.concatenate([node_rows[i] for i in ids])
        local = np.repeat(np.arange(len(ids)), [len(node_rows[i]) for i in ids])
        return data.codes[rows][:, features], gradients[rows], local

    chunk = max(1, _CHUNK_CELLS // (features.size * n_hist))
    legal = _dense_legal(n_edges, n_hist)
    for start in range(0, len(dense), chunk):
        ids = dense[start : start + chunk]
        codes, grads, local = gather(ids)
        hg, hn = build_histograms_batch(codes, grads, local, len(ids), n_hist)
        gain, nl = _scan(hg, hn, legal, mcw)
        for k, i in enumerate(ids):
            out[i] = _pick(gain[k], nl[k], len(node_rows[i]), features, data.edges, min_gain)

    # Group small nodes by size class so padding stays proportional.
    classes = {}
    for i in small:
        classes.setdefault(int(len(node_rows[i]) - 1).bit_length(), []).append(i)
    for size_class in sorted(classes):
        members = classes[size_class]
        chunk = max(1, _CHUNK_CELLS // (features.size * ((1 << size_class) + 2)))
        for start in range(0, len(members), chunk):
            ids = members[start : start + chunk]
            codes, grads, local = gather(ids)
            hg, hn, occ = _compressed_histograms(codes, grads, local, len(ids), n_hist)
            legal_c = occ[..., :-1] < n_edges[None, :, None]
            gain, nl = _scan(hg, hn, legal_c, mcw)
            for k, i in enumerate(ids):
                out[i] = _pick(
                    gain[k], nl[k], len(node_rows[i]), features, data.edges, min_gain,
                    bin_of=occ[k],
                )
    return out


def exact_best_split(x, residuals, min_child_weight=1, min_gain=0.0):
    """Brute-force best split of one raw feature column (test oracle).

    Scans every midpoint between consecutive sorted distinct values with
    missing values sent left, then right. Per-value sums accumulate in row
    order, exactly as histogram buckets do. Returns a candidate with
    ``feature=0`` and ``bin`` set to the boundary index, or None.
    """
    x = [float(v) for v in x]
    r = [float(v) for v in residuals]
    mcw = max(min_child_weight, 1)
    distinct = sorted({v for v in x if v == v})
    if len(distinct) < 2:
        return None
    pos = {v: k for k, v in enumerate(distinct)}
    sums = [0.0] * len(distinct)
    counts = [0] * len(distinct)
    nan_sum, nan_count = 0.0, 0
    for xi, ri in zip(x, r):
        if xi != xi:
            nan_sum += ri
            nan_count += 1
        else:
            sums[pos[xi]] += ri
            counts[pos[xi]] += 1
    prefix, prefix_n = [], []
    acc, acc_n = 0.0, 0
    for s, c in zip(sums, counts):
        acc += s
        acc_n += c
        prefix.append(acc)
        prefix_n.append(acc_n)
    total = prefix[-1] + nan_sum
    n = prefix_n[-1] + nan_count

    best = None
    for k in range(len(distinct) - 1):
        for nan_left in (True, False):
            gl = prefix[k] + nan_sum if nan_left else prefix[k]
            nl = prefix_n[k] + nan_count if nan_left else prefix_n[k]
            gr = total - gl
            nr = n - nl
            if nl < mcw or nr < mcw:
                continue
            gain = gl * gl / nl + gr * gr / nr - total * total / n
            if best is None or gain > best[0]:
                best = (gain, k, nan_left, nl, nr)
    if best is None or not (best[0] > 0.0 and best[0] >= min_gain):
        return None
    gain, k, nan_left, nl, nr = best
    return SplitCandidate(
        feature=0,
        bin=k,
        threshold=(distinct[k] + distinct[k + 1]) / 2.0,
        nan_left=nan_left,
        gain=gain,
        n_left=nl,
        n_right=nr,
    )
