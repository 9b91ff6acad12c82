"""``et-upscale`` command line.

Every command reads an optional JSON run config (``--config``). Any config
value can be overridden with a flag of the same dotted name, for example
``--train.learning_rate 0.05`` or ``--eval.k=10``. Relative paths resolve
against the config file's directory (the working directory without one).

Exit codes: 0 success, 2 configuration error, 3 I/O or format error,
4 empty joined dataset, 5 invalid fold count.
"""
from __future__ import annotations

import argparse
import copy
import csv
import datetime as dt
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import evaluation, gridio, ingest
from .errors import (
    ConfigError,
    DuplicateKeyError,
    EtUpscaleError,
    GridFormatError,
    HeaderError,
    IncompleteWindowError,
    InvalidKError,
    MalformedModelError,
    RowParseError,
    SchemaMismatchError,
    SchemaVersionError,
    UnitError,
)
from .gbdt import (
    TrainConfig,
    feature_importance_gain,
    fit,
    lightgbm_config,
    load_model,
    random_forest_config,
    save_model,
    xgboost_config,
)
from .physics import LE_TO_MM_DAY

log = logging.getLogger("et_upscale")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_EMPTY, EXIT_K = 0, 2, 3, 4, 5

PRESETS = {"lightgbm": lightgbm_config, "xgboost": xgboost_config, "random_forest": random_forest_config}

DEFAULT_CONFIG = {
    "seed": 0,
    "data": {
        "sites": "data/sites.csv",
        "flux": "data/flux.csv",
        "meteo": "data/meteo.csv",
        "reflectance": "data/reflectance.csv",
        "qc_min": ingest.DEFAULT_QC_MIN,
    },
    "synth": {"out_dir": "data", "n_sites": 4, "years": 3, "sigma": 5.0, "start_year": 2019},
    "train": {"preset": "lightgbm"},
    "eval": {"k": evaluation.DEFAULT_K, "grid": {}},
    "grid": {
        "spec": gridio.GridSpec().to_dict(),
        "dates": [],
        "start": None,
        "end": None,
        "sites": "data/sites.csv",
        "meteo": "data/meteo.csv",
        "reflectance": "data/reflectance.csv",
        "unit": gridio.MM_DAY,
    },
    "output": {"dir": "out", "model": "model.json"},
}

# Sections whose contents are free-form mappings rather than fixed keys.
_OPEN_SECTIONS = {("train",), ("eval", "grid"), ("grid", "spec")}

UNIT_ALIASES = {
    "w m-2": gridio.W_M2, "w/m2": gridio.W_M2, "wm2": gridio.W_M2, "le": gridio.W_M2,
    "mm day-1": gridio.MM_DAY, "mm/day": gridio.MM_DAY, "mm_day": gridio.MM_DAY, "et": gridio.MM_DAY,
    "mm month-1": gridio.MM_MONTH, "mm/month": gridio.MM_MONTH,
}


class EmptyDataError(EtUpscaleError):
    pass


class RunConfig:
    """Validated run configuration plus the directory paths resolve from."""

    def __init__(self, doc: dict, base_dir: Path):
        self.doc = doc
        self.base_dir = base_dir

    @classmethod
    def load(cls, path=None, overrides=()):
        doc = copy.deepcopy(DEFAULT_CONFIG)
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            try:
                user = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
            if not isinstance(user, dict):
                raise ConfigError(f"{path}: top level must be an object")
            _merge(doc, user, ())
            base = path.resolve().parent
        for dotted, value in overrides:
            _set_dotted(doc, dotted, value)
        return cls(doc, base)

    def path(self, value) -> Path | None:
        if value is None or value == "":
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def section(self, name):
        return self.doc[name]

    def train_config(self) -> TrainConfig:
        doc = dict(self.doc["train"])
        preset = doc.pop("preset", None)
        doc.setdefault("seed", self.doc["seed"])
        if preset is None:
            return TrainConfig.from_dict(doc)
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {', '.join(PRESETS)}")
        unknown = sorted(set(doc) - set(TrainConfig().to_dict()))
        if unknown:
            raise ConfigError(f"unknown training keys: {', '.join(unknown)}")
        return PRESETS[preset](**doc)


def _merge(doc, user, where):
    for key, value in user.items():
        here = (*where, key)
        if where in _OPEN_SECTIONS:
            doc[key] = value
            continue
        if key not in doc:
            raise ConfigError(f"unknown config key {'.'.join(here)}")
        if isinstance(doc[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{'.'.join(here)} must be an object")
            _merge(doc[key], value, here)
        else:
            doc[key] = value


def _set_dotted(doc, dotted, value):
    _merge(doc, _nest(dotted.split("."), value), ())


def _nest(parts, value):
    out = value
    for key in reversed(parts):
        out = {key: out}
    return out


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _split_overrides(extra):
    """Turn leftover ``--a.b value`` / ``--a.b=value`` arguments into pairs."""
    pairs, i = [], 0
    while i < len(extra):
        arg = extra[i]
        if not arg.startswith("--"):
            raise ConfigError(f"unexpected argument {arg!r}")
        name = arg[2:]
        if "=" in name:
            name, text = name.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"missing value for {arg}")
            text = extra[i + 1]
            i += 2
        pairs.append((name, _parse_value(text)))
    return pairs


def _threads(args):
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("ET_UPSCALE_THREADS")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ConfigError(f"ET_UPSCALE_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def _load_table(cfg: RunConfig):
    data = cfg.section("data")
    table = ingest.load_dataset(
        cfg.path(data["sites"]),
        cfg.path(data["flux"]),
        cfg.path(data["meteo"]),
        cfg.path(data.get("reflectance")),
        qc_min=float(data["qc_min"]),
    )
    if len(table) == 0:
        raise EmptyDataError("the joined dataset is empty")
    return table


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.path(cfg.section("output")["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _model_path(cfg, args) -> Path:
    if getattr(args, "model", None):
        return Path(args.model)
    return _out_dir(cfg) / cfg.section("output")["model"]


# -- commands ----------------------------------------------------------------

def cmd_synth(cfg: RunConfig, args) -> int:
    s = cfg.section("synth")
    out = Path(args.out) if args.out else cfg.path(s["out_dir"])
    table, truth = ingest.synth_dataset(
        s["n_sites"], s["years"], cfg.doc["seed"], sigma=float(s["sigma"]), start_year=int(s["start_year"])
    )
    paths = ingest.write_synth(truth, out)
    print(f"wrote {len(truth.flux)} flux rows for {len(set(table.groups))} site-years to {out}")
    for name, p in paths.items():
        print(f"  {name}: {p}")
    return EXIT_OK


def cmd_train(cfg: RunConfig, args) -> int:
    config = cfg.train_config()
    table = _load_table(cfg)
    if config.n_estimators == 0:
        warnings.warn("n_estimators=0: the model predicts the base score only", UserWarning)
    model = fit(table, config)
    path = _model_path(cfg, args)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, path)
    rmse = float(np.sqrt(np.mean((table.y - model.predict(table.X)) ** 2)))
    print(f"trained {len(model.trees)} trees on {len(table)} rows -> {path}")
    print(f"training RMSE: {rmse:.4f} W m-2 ({rmse * LE_TO_MM_DAY:.4f} mm day-1)")
    return EXIT_OK


def _k(cfg, args):
    k = args.k if args.k is not None else cfg.section("eval")["k"]
    if isinstance(k, bool) or not isinstance(k, int):
        raise InvalidKError(f"k must be an integer, got {k!r}")
    return k


def cmd_cv(cfg: RunConfig, args) -> int:
    config = cfg.train_config()
    table = _load_table(cfg)
    report = evaluation.cross_validate(table, config, _k(cfg, args), n_jobs=_threads(args))
    out = _out_dir(cfg)
    report.write_json(out / "cv_report.json")
    report.write_csv(out / "cv_report.csv")
    mean, se = report.mean, report.se
    print(f"{report.k}-fold grouped CV on {len(table)} rows, {len(set(table.groups))} site-years")
    print(f"  RMSE {mean.rmse:.3f} ± {se.rmse:.3f} W m-2 ({mean.rmse * LE_TO_MM_DAY:.3f} mm day-1)")
    print(f"  MAE  {mean.mae:.3f} ± {se.mae:.3f} W m-2")
    print(f"  R2   {mean.r2:.4f} ± {se.r2:.4f}")
    print(f"  report: {out / 'cv_report.json'}")
    return EXIT_OK


def cmd_grid_search(cfg: RunConfig, args) -> int:
    grid = cfg.section("eval")["grid"]
    if not grid:
        raise ConfigError("eval.grid is empty; give a list of values per training parameter")
    base = cfg.train_config()
    k = _k(cfg, args)
    table = _load_table(cfg)
    result = evaluation.grid_search(table, grid, k, base=base, n_jobs=_threads(args))
    out = _out_dir(cfg)
    result.write_csv(out / "grid_search.csv")
    (out / "best_config.json").write_text(json.dumps(result.best.to_dict(), indent=2) + "\n", encoding="utf-8")
    best = result.best_report.mean
    print(f"searched {len(result.configs)} configs; best #{result.best_index}: RMSE {best.rmse:.3f} W m-2")
    for name in grid:
        print(f"  {name} = {getattr(result.best, name)!r}")
    return EXIT_OK


def _dates(gdoc):
    dates = [dt.date.fromisoformat(d) for d in gdoc.get("dates") or []]
    if gdoc.get("start") or gdoc.get("end"):
        if not (gdoc.get("start") and gdoc.get("end")):
            raise ConfigError("grid.start and grid.end must be given together")
        d, end = dt.date.fromisoformat(gdoc["start"]), dt.date.fromisoformat(gdoc["end"])
        while d <= end:
            dates.append(d)
            d += dt.timedelta(days=1)
    if not dates:
        raise ConfigError("no grid dates: set grid.dates or grid.start/grid.end")
    return sorted(set(dates))


def _unit(text):
    unit = UNIT_ALIASES.get(str(text).strip().lower())
    if unit is None:
        raise UnitError(f"unknown unit {text!r}")
    return unit


def cmd_predict_grid(cfg: RunConfig, args) -> int:
    gdoc = cfg.section("grid")
    try:
        spec = gridio.GridSpec.from_dict(gdoc["spec"])
        dates = _dates(gdoc)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad grid section: {exc}") from None
    unit = _unit(gdoc["unit"])
    if unit == gridio.MM_MONTH:
        raise ConfigError("daily grids must be in W m-2 or mm day-1")
    model = load_model(_model_path(cfg, args))
    provider = gridio.PointFeatureProvider(
        ingest.load_sites(cfg.path(gdoc["sites"])),
        ingest.load_meteo_windows(cfg.path(gdoc["meteo"])),
        ingest.load_reflectance(cfg.path(gdoc["reflectance"])) if gdoc.get("reflectance") else {},
        schema=model.schema,
    )
    out = _out_dir(cfg) / "grids"
    out.mkdir(parents=True, exist_ok=True)
    n_jobs = _threads(args)
    daily = []
    for date in dates:
        grid = gridio.predict_grid(model, provider, spec, date, n_jobs=n_jobs)
        grid = gridio.convert_units(grid, unit)
        path = out / gridio.grid_filename(date)
        gridio.write_grid(grid, path)
        if args.csv:
            gridio.grid_to_csv(grid, path.with_suffix(".csv"))
        daily.append(grid)
    n_monthly = 0
    if args.monthly:
        by_month = {}
        for g in daily:
            by_month.setdefault((g.date.year, g.date.month), []).append(g)
        for (year, month), grids in sorted(by_month.items()):
            try:
                month_grid = gridio.monthly_aggregate(
                    [gridio.convert_units(g, gridio.MM_DAY) for g in grids], require_complete=True
                )
            except ValueError as exc:
                log.warning("skipping monthly sum for %04d-%02d: %s", year, month, exc)
                continue
            path = out / gridio.grid_filename(month_grid.date, monthly=True)
            gridio.write_grid(month_grid, path)
            if args.csv:
                gridio.grid_to_csv(month_grid, path.with_suffix(".csv"))
            n_monthly += 1
    print(f"wrote {len(daily)} daily and {n_monthly} monthly grids ({spec.n_rows}x{spec.n_cols}) to {out}")
    return EXIT_OK


def cmd_importance(cfg: RunConfig, args) -> int:
    model = load_model(args.model)
    report = feature_importance_gain(model)
    top = args.top if args.top is not None else 15
    if top < 0:
        raise ConfigError("--top must be >= 0")
    rows = report.rows()[:top]
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "gain", "splits"])
        for name, gain, splits in rows:
            w.writerow([name, repr(gain), splits])
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_convert(cfg: RunConfig, args) -> int:
    target = _unit(args.to)
    if args.grid:
        grid = gridio.convert_units(gridio.read_grid(args.grid), target)
        if not args.out:
            raise ConfigError("--out is required with --grid")
        gridio.write_grid(grid, args.out)
        print(f"wrote {args.out} ({grid.unit})")
        return EXIT_OK
    if not args.value:
        raise ConfigError("give --value numbers or --grid FILE")
    source = _unit(args.source)
    if (source, target) == (gridio.W_M2, gridio.MM_DAY):
        values = [v * LE_TO_MM_DAY for v in args.value]
    elif (source, target) == (gridio.MM_DAY, gridio.W_M2):
        values = [v / LE_TO_MM_DAY for v in args.value]
    elif source == target:
        values = list(args.value)
    else:
        raise UnitError(f"cannot convert {source} to {target}")
    for v in values:
        print(repr(v))
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "cv": cmd_cv,
    "grid-search": cmd_grid_search,
    "predict-grid": cmd_predict_grid,
    "importance": cmd_importance,
    "convert": cmd_convert,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="et-upscale", description="Knowledge-guided ET upscaling workflows.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--threads", type=int, help="worker cap (also ET_UPSCALE_THREADS)")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    p = add("synth", "write a synthetic dataset as ingestion CSVs")
    p.add_argument("--out", help="output directory (default synth.out_dir)")
    p = add("train", "train a model on the configured data")
    p.add_argument("--model", help="model path (default output.dir/output.model)")
    p = add("cv", "grouped k-fold cross-validation")
    p.add_argument("--k", type=int)
    p = add("grid-search", "exhaustive grid search over eval.grid")
    p.add_argument("--k", type=int)
    p = add("predict-grid", "predict ETGRID rasters for the configured dates")
    p.add_argument("--model", help="model path (default output.dir/output.model)")
    p.add_argument("--monthly", action="store_true", help="also write monthly sums for complete months")
    p.add_argument("--csv", action="store_true", help="also write a CSV next to each grid")
    p = add("importance", "gain importance table of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--top", type=int, default=15)
    p.add_argument("--out", help="CSV path (default stdout)")
    p = add("convert", "convert values or a grid between W m-2 and mm day-1")
    p.add_argument("--value", type=float, nargs="+")
    p.add_argument("--from", dest="source", default="W m-2")
    p.add_argument("--to", required=True)
    p.add_argument("--grid", help="input .etg file")
    p.add_argument("--out", help="output .etg file")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s"
    )
    try:
        cfg = RunConfig.load(args.config, _split_overrides(extra))
        return COMMANDS[args.command](cfg, args)
    except InvalidKError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_K
    except EmptyDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except (ConfigError, UnitError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        OSError, HeaderError, RowParseError, DuplicateKeyError, IncompleteWindowError,
        MalformedModelError, GridFormatError, SchemaMismatchError, SchemaVersionError,
    ) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
