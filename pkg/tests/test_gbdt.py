import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from et_upscale.errors import ConfigError, MalformedModelError, ModelVersionError, SchemaMismatchError
from et_upscale.features import FeatureSchema, FeatureVector, default_schema
from et_upscale.gbdt import (
    BinnedData,
    Ensemble,
    TrainConfig,
    best_split,
    bin_column,
    build_bins,
    build_histograms,
    exact_best_split,
    feature_importance_gain,
    find_node_splits,
    fit,
    fit_arrays,
    grow_tree,
    lightgbm_config,
    load_model,
    node_gains,
    predict,
    random_forest_config,
    save_model,
    xgboost_config,
)


def column_split(x, r, max_bins=255, mcw=1, min_gain=0.0):
    """best_split on the histogram of one raw column."""
    edges = build_bins(x, max_bins)
    codes = bin_column(x, edges, max_bins)[:, None]
    g, n = build_histograms(codes, np.asarray(r, float), max_bins + 1)
    return best_split(g[0], n[0], edges, mcw, min_gain)


class TestBinning:
    def test_midpoints(self):
        np.testing.assert_array_equal(build_bins([1, 2, 3, 2]), [1.5, 2.5])

    def test_constant_and_all_nan(self):
        assert build_bins(np.full(20, 4.0)).size == 0
        assert build_bins(np.full(5, np.nan)).size == 0

    def test_quantile_bins_balanced(self):
        x = np.random.default_rng(0).uniform(size=10_000)
        edges = build_bins(x, 255)
        counts = np.bincount(bin_column(x, edges, 255), minlength=255)[:255]
        target = 10_000 / 255
        assert edges.size == 254
        assert np.all(counts <= 3 * target) and np.all(counts >= target / 3)

    def test_nan_bin_reserved(self):
        data = BinnedData(np.array([[1.0], [np.nan], [3.0]]), max_bins=16)
        assert data.codes[:, 0].tolist() == [0, 16, 1]


class TestBestSplit:
    def test_hand_example(self):
        s = column_split([1, 1, 2, 2], [0, 0, 10, 10])
        assert (s.threshold, s.gain, s.n_left, s.n_right) == (1.5, 100.0, 2, 2)
        e = exact_best_split([1, 1, 2, 2], [0, 0, 10, 10])
        assert (e.threshold, e.gain) == (1.5, 100.0)

    def test_constant_targets(self):
        assert column_split([1, 2, 3, 4], [5, 5, 5, 5], min_gain=1e-9) is None

    def test_child_weight(self):
        assert column_split([1, 1, 2, 2], [0, 0, 10, 10], mcw=3) is None

    def test_empty_histogram(self):
        assert best_split(np.zeros(4), np.zeros(4, int), [1.5, 2.5]) is None

    def test_constant_feature_oracle(self):
        assert exact_best_split([3, 3, 3], [1, 2, 3]) is None

    def test_nan_direction_learned(self):
        x = [1, 1, 2, 2, np.nan, np.nan]
        r = [0, 0, 10, 10, 10, 10]
        s = column_split(x, r)
        assert s.threshold == 1.5 and not s.nan_left and s.n_left == 2

    def test_ties_prefer_nan_left(self):
        assert column_split([1, 1, 2, 2], [0, 0, 10, 10]).nan_left

    def test_ties_prefer_lowest_feature(self):
        rng = np.random.default_rng(1)
        x = rng.integers(0, 5, 40).astype(float)
        X = np.column_stack([x, x])
        data = BinnedData(X)
        r = x * 2 + rng.normal(size=40)
        (split,) = find_node_splits(data, r, [np.arange(40)], [1, 0], 1, 0.0)
        assert split.feature == 1  # first in candidate order wins ties
        (split,) = find_node_splits(data, r, [np.arange(40)], [0, 1], 1, 0.0)
        assert split.feature == 0

    @settings(max_examples=60, deadline=None)
    @given(
        n=st.integers(2, 60),
        distinct=st.integers(1, 12),
        nan_frac=st.sampled_from([0.0, 0.2]),
        seed=st.integers(0, 10_000),
    )
    def test_matches_exact_oracle(self, n, distinct, nan_frac, seed):
        rng = np.random.default_rng(seed)
        x = rng.integers(0, distinct, n).astype(float) * 0.37
        x[rng.random(n) < nan_frac] = np.nan
        r = rng.normal(size=n)
        a, b = column_split(x, r), exact_best_split(x, r)
        if b is None:
            assert a is None
        else:
            assert (a.threshold, a.gain, a.nan_left) == (b.threshold, b.gain, b.nan_left)


def test_small_and_large_nodes_agree():
    """Compressed histograms for small nodes give the dense answer."""
    rng = np.random.default_rng(7)
    X = rng.normal(size=(3000, 6))
    X[rng.random(X.shape) < 0.1] = np.nan
    X[:, 2] = np.round(X[:, 2])
    data = BinnedData(X)
    r = rng.normal(size=3000)
    nodes = [rng.choice(3000, size=k, replace=False) for k in (3, 4, 17, 120, 255, 256, 900)]
    found = find_node_splits(data, r, nodes, np.arange(6), 2, 0.0)
    for rows, split in zip(nodes, found):
        best = None
        for f in range(6):
            g, n = build_histograms(data.codes[rows][:, [f]], r[rows], data.n_hist)
            cand = best_split(g[0], n[0], data.edges[f], 2, 0.0)
            if cand is not None and (best is None or cand.gain > best[1].gain):
                best = (f, cand)
        if best is None:
            assert split is None
            continue
        assert (split.feature, split.bin, split.nan_left, split.gain) == (best[0], best[1].bin, best[1].nan_left, best[1].gain)


class TestTrees:
    def _data(self, n=50, seed=0, p=3):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, p))
        y = X[:, 0] * 3 + np.sin(X[:, 1] * 2) + rng.normal(scale=0.3, size=n)
        return X, y

    def test_single_leaf(self):
        X, y = self._data()
        tree = grow_tree(BinnedData(X), y, np.arange(50), np.arange(3), TrainConfig(num_leaves=1))
        assert tree.n_leaves == 1
        assert tree.value[0] == pytest.approx(np.mean(y), rel=1e-12)

    def test_separable_target(self):
        X = np.array([[0.0], [0.0], [1.0], [1.0]])
        y = np.array([-2.0, -2.0, 5.0, 5.0])
        tree = grow_tree(BinnedData(X), y, np.arange(4), [0], TrainConfig(num_leaves=31))
        assert tree.n_leaves == 2
        np.testing.assert_array_equal(tree.predict(X), y)

    def test_leafwise_not_worse_than_depthwise(self):
        X, y = self._data()
        data = BinnedData(X)
        rows, feats = np.arange(50), np.arange(3)
        leaf = grow_tree(data, y, rows, feats, TrainConfig(num_leaves=8))
        depth = grow_tree(data, y, rows, feats, TrainConfig(growth="depthwise", max_depth=3))
        assert leaf.n_leaves == depth.n_leaves == 8
        assert np.sum((y - leaf.predict(X)) ** 2) <= np.sum((y - depth.predict(X)) ** 2)

    def test_children_nonempty_and_gains_positive(self):
        X, y = self._data(400, seed=2, p=5)
        model = fit_arrays(X, y, xgboost_config(n_estimators=5))
        for tree in model.trees:
            internal = ~tree.is_leaf
            assert np.all(tree.count[tree.left[internal]] >= 5)
            assert np.all(tree.count[tree.right[internal]] >= 5)
            assert np.all(tree.gain[internal] >= 0.6)
            assert tree.depth() <= 14


class TestEnsemble:
    def test_no_trees_predicts_base(self):
        X = np.random.default_rng(0).normal(size=(30, 4))
        y = np.arange(30.0)
        model = fit_arrays(X, y, TrainConfig(n_estimators=0))
        np.testing.assert_array_equal(model.predict(X), np.full(30, 14.5))

    def test_single_row_warns(self):
        with pytest.warns(UserWarning):
            model = fit_arrays(np.ones((1, 3)), [4.0], TrainConfig())
        assert model.trees == [] and model.predict(np.zeros((1, 3)))[0] == 4.0

    def test_memorises_training_rows(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(60, 2))
        y = rng.normal(size=60) * 10
        model = fit_arrays(X, y, TrainConfig(n_estimators=1, learning_rate=1.0, num_leaves=200))
        np.testing.assert_allclose(model.predict(X), y, atol=1e-6)

    def test_all_nan_vector_is_finite(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(300, 4))
        X[rng.random(X.shape) < 0.2] = np.nan
        y = np.nan_to_num(X[:, 0]) + rng.normal(size=300)
        model = fit_arrays(X, y, TrainConfig(n_estimators=20))
        assert np.isfinite(model.predict(np.full((1, 4), np.nan))[0])

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        X, y = rng.normal(size=(500, 8)), rng.normal(size=500)
        cfg = lightgbm_config(n_estimators=10, subsample=0.8)
        a, b = fit_arrays(X, y, cfg), fit_arrays(X, y, cfg)
        assert a.predict(X).tobytes() == b.predict(X).tobytes()

    def test_noiseless_synthetic_rmse_strictly_decreasing(self, small_synth):
        from et_upscale.ingest import synth_dataset

        table, _ = synth_dataset(2, 1, seed=3, sigma=0.0)
        model = fit(table, lightgbm_config(n_estimators=60))
        assert np.all(np.diff(model.train_rmse) < 0)

    def test_monotone_relabelling_within_bins(self):
        rng = np.random.default_rng(8)
        X = np.round(rng.normal(size=(400, 3)), 1)
        y = X[:, 0] ** 2 + X[:, 1] + rng.normal(scale=0.1, size=400)
        model = fit_arrays(X, y, TrainConfig(n_estimators=15))
        data = BinnedData(X)
        X2 = X.copy()
        for j in range(3):
            edges = data.edges[j]
            upper = np.append(edges, np.inf)[bin_column(X[:, j], edges, 255)]
            room = np.where(np.isfinite(upper), upper - X[:, j], 0.05)
            X2[:, j] = X[:, j] + 0.5 * room
        assert model.predict(X2).tobytes() == model.predict(X).tobytes()

    def test_schema_checked_on_vector(self):
        rng = np.random.default_rng(9)
        schema = default_schema()
        X = rng.normal(size=(50, len(schema)))
        model = fit_arrays(X, rng.normal(size=50), TrainConfig(n_estimators=2), schema)
        vec = FeatureVector(X[0], schema)
        assert predict(model, vec) == model.predict(X[:1])[0]
        other = FeatureSchema(tuple((n + "_x", g) for n, g in schema.slots))
        with pytest.raises(SchemaMismatchError):
            predict(model, FeatureVector(X[0], other))

    @pytest.mark.slow
    def test_forest_preset_completes(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(5000, 20))
        y = X[:, 0] * 5 + X[:, 1] ** 2 + rng.normal(size=5000)
        model = fit_arrays(X, y, random_forest_config())
        assert len(model.trees) == 100
        assert model.train_rmse[-1] < np.std(y)


class TestImportance:
    def test_stump_puts_all_gain_on_its_feature(self):
        X = np.column_stack([np.zeros(20), np.repeat([0.0, 1.0], 10), np.zeros(20)])
        y = np.repeat([0.0, 4.0], 10)
        model = fit_arrays(X, y, TrainConfig(n_estimators=1, num_leaves=2))
        rep = feature_importance_gain(model)
        assert rep.features == (1,) and rep.splits == (1,) and rep.gain[0] == 80.0

    def test_conservation_exact(self):
        rng = np.random.default_rng(11)
        X, y = rng.normal(size=(400, 6)), rng.normal(size=400)
        model = fit_arrays(X, y, TrainConfig(n_estimators=25, colsample=0.5))
        rep = feature_importance_gain(model)
        assert sum(rep.exact_gain) == sum(Fraction(g) for _, g in node_gains(model))
        assert all(g >= 0 for g in rep.gain)
        assert list(rep.gain) == sorted(rep.gain, reverse=True)

    def test_untrained_is_empty(self):
        model = fit_arrays(np.ones((3, 2)), [1.0, 2.0, 3.0], TrainConfig(n_estimators=0))
        assert len(feature_importance_gain(model)) == 0


class TestModelFiles:
    @pytest.fixture
    def model(self):
        rng = np.random.default_rng(12)
        schema = default_schema()
        X = rng.normal(size=(300, len(schema)))
        X[rng.random(X.shape) < 0.1] = np.nan
        return fit_arrays(X, rng.normal(size=300), lightgbm_config(n_estimators=8), schema)

    def test_round_trip_bit_identical(self, tmp_path, model):
        path = save_model(model, tmp_path / "m.json")
        assert (tmp_path / "m.schema.json").exists()
        again = load_model(path)
        V = np.random.default_rng(13).normal(size=(1000, model.n_features))
        V[::7, ::3] = np.nan
        assert again.predict(V).tobytes() == model.predict(V).tobytes()

    def test_truncated_file(self, tmp_path, model):
        path = save_model(model, tmp_path / "m.json")
        path.write_text(path.read_text()[:200])
        with pytest.raises(MalformedModelError):
            load_model(path)

    def test_version_mismatch(self, tmp_path, model):
        path = save_model(model, tmp_path / "m.json")
        doc = json.loads(path.read_text())
        doc["version"] = 99
        path.write_text(json.dumps(doc))
        with pytest.raises(ModelVersionError):
            load_model(path)

    def test_wrong_schema(self, tmp_path, model):
        path = save_model(model, tmp_path / "m.json")
        other = FeatureSchema(tuple((n + "_v2", g) for n, g in default_schema().slots))
        with pytest.raises(SchemaMismatchError):
            load_model(path, schema=other)


class TestConfig:
    @pytest.mark.parametrize(
        "changes",
        [dict(mode="boosting"), dict(learning_rate=0.0), dict(colsample=1.5), dict(num_leaves=0), dict(max_bins=1)],
    )
    def test_invalid(self, changes):
        with pytest.raises(ConfigError):
            TrainConfig(**changes)

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"eta": 0.1})

    def test_presets(self):
        lgb = lightgbm_config()
        assert (lgb.num_leaves, lgb.learning_rate, lgb.colsample) == (80, 0.05, 0.7)
        assert random_forest_config().mode == "bagged"
        assert xgboost_config().min_gain == 0.6
