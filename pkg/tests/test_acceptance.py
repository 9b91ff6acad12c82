"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the status lines are
written straight to the terminal, bypassing output capture.
"""
import datetime as dt
import math
import time

import numpy as np
import pytest

from et_upscale import physics
from et_upscale.evaluation import cross_validate, group_kfold, metrics
from et_upscale.features import vegetation_indices
from et_upscale.gbdt import (
    best_split,
    bin_column,
    build_bins,
    build_histograms,
    exact_best_split,
    feature_importance_gain,
    fit,
    fit_arrays,
    lightgbm_config,
)
from et_upscale.gridio import EtGrid, GridSpec, grid_from_bytes, grid_to_bytes, predict_grid
from et_upscale.ingest import synth_dataset


@pytest.fixture
def report(pytestconfig):
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")

    def emit(number, title, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}"
        if detail:
            line += f" ({detail})"
        with capman.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        return ok

    return emit


def test_01_physics_oracles(report):
    t0 = time.perf_counter()
    et0 = physics.penman_monteith(13.28, 0.0, 16.9, 2.078, 1.997, 1.409, 0.122, 0.0666)
    delta, gamma = 0.145, 0.0674
    checks = {
        "hand case": abs(et0 - 3.9) <= 0.05,
        "zero wind": physics.wind_speed_2m(0.0, 0.0) == 0.0,
        "calm and saturated": physics.penman_monteith(12.0, 1.5, 20.0, 0.0, 2.3, 2.3, delta, gamma)
        == 0.408 * delta * (12.0 - 1.5) / (delta + gamma),
        "Rn equals G": physics.penman_monteith(5.0, 5.0, 20.0, 0.0, 2.3, 1.5, delta, gamma) == 0.0,
        "Tmax equals Tmin": physics.hargreaves_samani(15.0, 15.0, 15.0, 30.0) == 0.0,
        "offset root": physics.hargreaves_samani(-17.8, 0.0, -30.0, 30.0) == 0.0,
        "zero flux": physics.le_to_et_depth(0.0) == 0.0,
    }
    elapsed = time.perf_counter() - t0
    failed = [k for k, ok in checks.items() if not ok]
    ok = not failed and elapsed < 1.0
    report(1, "physics oracles", ok, f"ET0={et0:.4f} mm/day, {elapsed * 1e3:.1f} ms, failed={failed}")
    assert ok


def test_02_vegetation_indices(report):
    red, nir, blue, green = 0.1, 0.5, 0.05, 0.08
    vi = vegetation_indices((red, nir, blue, green, 0.45, 0.2, 0.12))
    hand = {
        "ndvi": 0.4 / 0.6,
        "evi": 0.4 / (0.5 + 0.6 - 0.375 + 1),
        "gndvi": 0.42 / 0.58,
        "savi": 1.5 * 0.4 / 1.1,
        "arvi": (0.5 - 0.2 + 0.05) / (0.5 + 0.2 - 0.05),
    }
    worst = max(abs(vi[k] - v) for k, v in hand.items())
    ok = worst <= 1e-9
    report(2, "vegetation indices as printed", ok, f"max abs error {worst:.1e}")
    assert ok


def _random_column(rng):
    n = int(rng.integers(2, 400))
    distinct = int(rng.integers(1, 256))
    kind = rng.integers(3)
    if kind == 0:
        values = rng.normal(size=distinct)
    elif kind == 1:
        values = np.arange(distinct) * float(rng.uniform(0.01, 3))
    else:
        values = np.round(rng.exponential(size=distinct), 2)
    x = rng.choice(values, size=n)
    x[rng.random(n) < rng.choice([0.0, 0.1, 0.4])] = np.nan
    return x, rng.normal(size=n) * rng.uniform(0.1, 100)


def test_03_histogram_split_equivalence(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    mismatches = compared = 0
    for _ in range(1200):
        x, r = _random_column(rng)
        mcw = int(rng.choice([1, 1, 3]))
        edges = build_bins(x, 255)
        assert np.unique(x[~np.isnan(x)]).size <= 255
        g, n = build_histograms(bin_column(x, edges, 255)[:, None], r, 256)
        hist = best_split(g[0], n[0], edges, mcw)
        exact = exact_best_split(x, r, mcw)
        compared += 1
        if exact is None:
            mismatches += hist is not None
        elif hist is None or (hist.feature, hist.threshold, hist.gain) != (
            exact.feature, exact.threshold, exact.gain
        ):
            mismatches += 1
    elapsed = time.perf_counter() - t0
    ok = mismatches == 0 and compared >= 1000 and elapsed < 30
    report(3, "histogram split equals exact split", ok, f"{compared} instances, {mismatches} mismatches, {elapsed:.1f} s")
    assert ok


def test_04_boosting_monotone(report):
    increases = 0
    for seed in range(3):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(400, 6))
        X[rng.random(X.shape) < 0.05] = np.nan
        y = np.sin(np.nan_to_num(X[:, 0]) * 2) + np.nan_to_num(X[:, 1]) ** 2 + rng.normal(0, 0.3, 400)
        model = fit_arrays(X, y, lightgbm_config(n_estimators=200, num_leaves=8, min_gain=0.0, seed=seed))
        pred = np.full(len(y), model.base_score)
        rmse = []
        for tree in model.trees:
            pred = pred + tree.predict(X)
            rmse.append(math.sqrt(np.mean((y - pred) ** 2)))
        assert len(rmse) == 200
        increases += int(np.sum(np.diff(rmse) > 0))
    ok = increases == 0
    report(4, "training RMSE non-increasing", ok, f"3 tables x 200 iterations, {increases} increases")
    assert ok


def test_05_leakage_free_folds(report):
    rng = np.random.default_rng(5)
    bad = 0
    layouts = 0
    while layouts < 1000:
        n_groups = int(rng.integers(2, 40))
        keys = [(f"S{int(s)}", int(y)) for s, y in zip(rng.integers(0, 15, n_groups), rng.integers(2000, 2010, n_groups))]
        groups = [keys[i] for i in rng.integers(0, len(keys), int(rng.integers(n_groups, 300)))]
        distinct = set(groups)
        if len(distinct) < 2:
            continue
        layouts += 1
        k = int(rng.integers(2, len(distinct) + 1))
        plan = group_kfold(groups, k)
        seen = set()
        for train, valid in plan.splits(groups):
            tr = {groups[i] for i in train}
            va = {groups[i] for i in valid}
            if tr & va or len(train) + len(valid) != len(groups):
                bad += 1
            if va & seen:
                bad += 1
            seen |= va
        bad += seen != distinct
    ok = bad == 0
    report(5, "grouped folds never leak", ok, f"{layouts} layouts, {bad} violations")
    assert ok


def test_06_synthetic_recovery(report):
    t0 = time.perf_counter()
    table, truth = synth_dataset(10, 2, seed=0, sigma=5.0)
    assert len(set(table.groups)) == 20
    rep = cross_validate(table, lightgbm_config(), k=5, n_jobs=4)
    mean = rep.mean
    ok = mean.r2 >= 0.90 and mean.rmse <= 2 * truth.sigma
    report(
        6, "synthetic recovery", ok,
        f"R2={mean.r2:.4f}, RMSE={mean.rmse:.3f} W m-2, {time.perf_counter() - t0:.0f} s",
    )
    assert ok


def test_07_kgml_dominance(report):
    tops = []
    for seed in range(10):
        table, _ = synth_dataset(4, 1, seed=seed, sigma=5.0)
        imp = feature_importance_gain(fit(table, lightgbm_config(seed=seed)))
        tops.append(table.schema.groups[imp.features[0]])
    hits = tops.count("kgml")
    ok = hits >= 9
    report(7, "KGML feature has top gain", ok, f"{hits}/10 seeds")
    assert ok


def test_08_metric_identities(report):
    rng = np.random.default_rng(8)
    y = rng.normal(50, 20, 200)
    perfect = metrics(y, y)
    mean = metrics(y, np.full_like(y, y.mean()))
    ordered = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 50))
        a, b = rng.normal(size=n) * 10, rng.normal(size=n) * 10
        m = metrics(a, b)
        ordered += m.rmse >= m.mae
    ok = (perfect.mae, perfect.rmse, perfect.r2) == (0.0, 0.0, 1.0) and abs(mean.r2) <= 1e-12 and ordered == 10_000
    report(8, "metric identities", ok, f"mean-prediction R2={mean.r2:.1e}, RMSE>=MAE in {ordered}/10000")
    assert ok


def test_09_unit_conversion(report):
    mm = physics.le_to_et_depth(22.07)
    rel = abs(mm - 0.775) / 0.775
    x = np.random.default_rng(9).uniform(-200, 800, 10_000)
    back = physics.et_depth_to_le(physics.le_to_et_depth(x))
    worst = float(np.max(np.abs(back - x) / np.abs(x)))
    ok = round(mm, 3) == 0.778 and rel < 0.005 and worst <= 1e-12
    report(9, "unit conversion", ok, f"22.07 W m-2 = {mm:.4f} mm/day, {rel:.2%} from 0.775, round trip {worst:.1e}")
    assert ok


def test_10_grid_round_trip_and_parallel_predict(report):
    rng = np.random.default_rng(10)
    identical = 0
    for _ in range(100):
        rows, cols = int(rng.integers(1, 40)), int(rng.integers(1, 40))
        lat0, lon0, cell = float(rng.uniform(-60, 50)), float(rng.uniform(-180, 100)), float(rng.uniform(0.001, 0.5))
        spec = GridSpec(lat0, lat0 + rows * cell, lon0, lon0 + cols * cell, cell)
        values = rng.normal(0, 100, spec.shape).astype(np.float32)
        values[rng.random(spec.shape) < 0.2] = np.nan
        date = dt.date(2000, 1, 1) + dt.timedelta(days=int(rng.integers(0, 9000)))
        grid = EtGrid(spec, date, values, str(rng.choice(["W m-2", "mm day-1", "mm month-1"])))
        identical += grid_from_bytes(grid_to_bytes(grid)).identical(grid)

    X = rng.normal(size=(500, 5))
    model = fit_arrays(X, X[:, 0] * 3 + X[:, 1] ** 2, lightgbm_config(n_estimators=30, min_child_weight=5))

    def provider(lat, lon, date):
        if (round(lat * 1e3) + round(lon * 1e3)) % 7 == 0:
            return None
        return np.array([math.sin(lat), math.cos(lon), lat - lon, lat * lon % 1, math.nan])

    spec = GridSpec(40.0, 41.0, -95.0, -93.5, 0.05)
    day = dt.date(2020, 7, 1)
    grids = {n: predict_grid(model, provider, spec, day, n_jobs=n) for n in (1, 4)}
    expected = np.full(spec.shape, np.nan, dtype=np.float32)
    for i, lat in enumerate(spec.lat_centers()):
        for j, lon in enumerate(spec.lon_centers()):
            v = provider(float(lat), float(lon), day)
            if v is not None:
                expected[i, j] = model.predict(v[None, :])[0]
    same = all(g.values.tobytes() == expected.tobytes() for g in grids.values())
    ok = identical == 100 and same
    report(10, "ETGRID round trip and parallel predict", ok, f"{identical}/100 identical, predict_grid exact={same}")
    assert ok
