"""CSV ingestion, the training-table join and a synthetic dataset generator.

Four CSV layouts are read and written (UTF-8, ISO dates, '.' decimals):

* sites:        ``site_id,lat,lon,igbp``
* flux:         ``site_id,date,le_f_mds,le_f_mds_qc``
* meteorology:  ``site_id,date,variable,lag00..lag29`` (lag29 is the
  observation day; ssr in MJ m-2 day-1, evap/tp in mm day-1, temperatures
  degC, pressure kPa, winds m s-1)
* reflectance:  ``site_id,date,<7 bands>,<4 angles>,state_qa``
"""
from __future__ import annotations

import csv
import datetime as dt
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import physics
from .errors import (
    DuplicateKeyError,
    HeaderError,
    IncompleteWindowError,
    InvalidInputError,
    RowParseError,
    SuspiciousValueWarning,
    ConfigError,
)
from .features import (
    ANGLE_NAMES,
    BAND_NAMES,
    IGBP_NAMES,
    METEO_VARIABLES,
    WINDOW_DAYS,
    FeatureSchema,
    MeteoWindow,
    ReflectanceSample,
    assemble_features,
    pm_et0_daily,
    default_schema,
    igbp_code,
)

log = logging.getLogger(__name__)

DEFAULT_QC_MIN = 0.75

SITES_HEADER = ["site_id", "lat", "lon", "igbp"]
FLUX_HEADER = ["site_id", "date", "le_f_mds", "le_f_mds_qc"]
LAG_COLUMNS = [f"lag{i:02d}" for i in range(WINDOW_DAYS)]
METEO_HEADER = ["site_id", "date", "variable", *LAG_COLUMNS]
REFLECTANCE_HEADER = ["site_id", "date", *BAND_NAMES, *ANGLE_NAMES, "state_qa"]


@dataclass(frozen=True)
class SiteMeta:
    site_id: str
    lat: float
    lon: float
    igbp: int


@dataclass(frozen=True)
class FluxObservation:
    site_id: str
    date: dt.date
    le: float
    qc: float


@dataclass(frozen=True)
class DatasetTable:
    """Training rows: feature matrix, LE target (W m-2) and row metadata.

    ``groups`` holds the ``"site_id:year"`` key used for cross-validation.
    ``dropped`` counts flux rows that found no meteorology window or site.
    """

    X: np.ndarray
    y: np.ndarray
    groups: tuple
    months: np.ndarray
    igbp: np.ndarray
    site_ids: tuple
    dates: tuple
    schema: FeatureSchema
    dropped: int = 0

    def __len__(self):
        return self.y.shape[0]

    def subset(self, idx) -> "DatasetTable":
        idx = np.asarray(idx, dtype=np.int64)
        return DatasetTable(
            X=self.X[idx],
            y=self.y[idx],
            groups=tuple(self.groups[i] for i in idx),
            months=self.months[idx],
            igbp=self.igbp[idx],
            site_ids=tuple(self.site_ids[i] for i in idx),
            dates=tuple(self.dates[i] for i in idx),
            schema=self.schema,
        )


def _reader(path, header):
    path = Path(path)
    fh = path.open(newline="", encoding="utf-8")
    reader = csv.reader(fh)
    first = next(reader, None)
    if first is not None and [c.strip() for c in first] != header:
        fh.close()
        raise HeaderError(f"{path}: expected header {','.join(header)}, got {','.join(first)}")
    return fh, reader, path


def _rows(path, header):
    fh, reader, path = _reader(path, header)
    with fh:
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise RowParseError(path, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, row


def _float(path, line, text, name):
    try:
        value = float(text)
    except ValueError:
        raise RowParseError(path, line, f"{name}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise RowParseError(path, line, f"{name}: not finite: {text!r}")
    return value


def _date(path, line, text):
    try:
        return dt.date.fromisoformat(text.strip())
    except ValueError:
        raise RowParseError(path, line, f"bad ISO date {text!r}") from None


def load_sites(path) -> list[SiteMeta]:
    path = Path(path)
    if path.stat().st_size == 0:
        return []
    sites, seen = [], set()
    for line, row in _rows(path, SITES_HEADER):
        site_id = row[0].strip()
        if site_id in seen:
            raise DuplicateKeyError(f"{path}:{line}: duplicate site_id {site_id!r}")
        seen.add(site_id)
        lat = _float(path, line, row[1], "lat")
        lon = _float(path, line, row[2], "lon")
        if not (-90 <= lat <= 90 and -180 <= lon <= 180):
            raise RowParseError(path, line, "coordinates out of range")
        try:
            code = igbp_code(row[3])
        except InvalidInputError as exc:
            raise RowParseError(path, line, str(exc)) from None
        sites.append(SiteMeta(site_id, lat, lon, code))
    return sites


def load_flux(path, qc_min=DEFAULT_QC_MIN) -> list[FluxObservation]:
    """Daily latent heat flux, keeping rows with ``qc >= qc_min``."""
    path = Path(path)
    if path.stat().st_size == 0:
        return []
    out = []
    for line, row in _rows(path, FLUX_HEADER):
        date = _date(path, line, row[1])
        le = _float(path, line, row[2], "le_f_mds")
        qc = _float(path, line, row[3], "le_f_mds_qc")
        if not 0 <= qc <= 1:
            raise RowParseError(path, line, f"QC fraction outside [0, 1]: {qc}")
        if qc >= qc_min:
            out.append(FluxObservation(row[0].strip(), date, le, qc))
    return out


def load_meteo_windows(path) -> list[MeteoWindow]:
    path = Path(path)
    if path.stat().st_size == 0:
        return []
    grouped: dict[tuple, dict] = {}
    for line, row in _rows(path, METEO_HEADER):
        key = (row[0].strip(), _date(path, line, row[1]))
        var = row[2].strip()
        if var not in METEO_VARIABLES:
            raise RowParseError(path, line, f"unknown variable {var!r}")
        series = grouped.setdefault(key, {})
        if var in series:
            raise DuplicateKeyError(f"{path}:{line}: duplicate {var} for {key[0]} {key[1]}")
        series[var] = np.array([_float(path, line, v, c) for v, c in zip(row[3:], LAG_COLUMNS)])
    windows = []
    for (site_id, date), series in grouped.items():
        missing = [v for v in METEO_VARIABLES if v not in series]
        if missing:
            raise IncompleteWindowError(site_id, date, missing)
        windows.append(MeteoWindow(site_id, date, series))
    return windows


def load_reflectance(path) -> dict:
    """Reflectance samples keyed by ``(site_id, date)``."""
    path = Path(path)
    if path.stat().st_size == 0:
        return {}
    out = {}
    for line, row in _rows(path, REFLECTANCE_HEADER):
        key = (row[0].strip(), _date(path, line, row[1]))
        bands = [_float(path, line, v, n) for v, n in zip(row[2:9], BAND_NAMES)]
        angles = [_float(path, line, v, n) for v, n in zip(row[9:13], ANGLE_NAMES)]
        try:
            qa = int(row[13].strip())
        except ValueError:
            raise RowParseError(path, line, f"state_qa must be an integer, got {row[13]!r}") from None
        if any(not -0.1 <= b <= 1.6 for b in bands):
            warnings.warn(f"{path}:{line}: reflectance outside [-0.1, 1.6]", SuspiciousValueWarning)
        if key in out:
            raise DuplicateKeyError(f"{path}:{line}: duplicate reflectance for {key[0]} {key[1]}")
        try:
            out[key] = ReflectanceSample(tuple(bands), *angles, state_qa=qa)
        except InvalidInputError as exc:
            raise RowParseError(path, line, str(exc)) from None
    return out


def join_dataset(sites, flux, windows, refl=None, schema=None) -> DatasetTable:
    """Inner-join flux with meteorology windows (and site metadata), left-join
    reflectance, and assemble one feature vector per surviving row."""
    schema = default_schema() if schema is None else schema
    refl = refl or {}
    site_map = {s.site_id: s for s in sites}
    win_map = {(w.site_id, w.date): w for w in windows}
    vectors, y, groups, months, codes, site_ids, dates = [], [], [], [], [], [], []
    dropped = 0
    for obs in flux:
        window = win_map.get((obs.site_id, obs.date))
        site = site_map.get(obs.site_id)
        if window is None or site is None:
            dropped += 1
            continue
        doy = obs.date.timetuple().tm_yday
        geo = physics.GeoTime(site.lat, site.lon, doy)
        vec = assemble_features(window, refl.get((obs.site_id, obs.date)), geo, site.igbp, doy, schema)
        vectors.append(vec.values)
        y.append(obs.le)
        groups.append(f"{obs.site_id}:{obs.date.year}")
        months.append(obs.date.month)
        codes.append(site.igbp)
        site_ids.append(obs.site_id)
        dates.append(obs.date)
    if dropped:
        log.warning("dropped %d flux rows without a matching window or site", dropped)
    X = np.vstack(vectors) if vectors else np.empty((0, len(schema)))
    return DatasetTable(
        X=X,
        y=np.asarray(y, dtype=float),
        groups=tuple(groups),
        months=np.asarray(months, dtype=np.int64),
        igbp=np.asarray(codes, dtype=np.int64),
        site_ids=tuple(site_ids),
        dates=tuple(dates),
        schema=schema,
        dropped=dropped,
    )


def load_dataset(sites_path, flux_path, meteo_path, refl_path=None, qc_min=DEFAULT_QC_MIN, schema=None):
    refl = load_reflectance(refl_path) if refl_path is not None else {}
    return join_dataset(
        load_sites(sites_path), load_flux(flux_path, qc_min), load_meteo_windows(meteo_path), refl, schema
    )


# -- writers ---------------------------------------------------------------

def _writer(path, header):
    fh = Path(path).open("w", newline="", encoding="utf-8")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    return fh, w


def _num(x):
    return repr(float(x))


def write_sites(sites, path):
    fh, w = _writer(path, SITES_HEADER)
    with fh:
        for s in sites:
            w.writerow([s.site_id, _num(s.lat), _num(s.lon), IGBP_NAMES[s.igbp]])


def write_flux(flux, path):
    fh, w = _writer(path, FLUX_HEADER)
    with fh:
        for f in flux:
            w.writerow([f.site_id, f.date.isoformat(), _num(f.le), _num(f.qc)])


def write_meteo_windows(windows, path):
    fh, w = _writer(path, METEO_HEADER)
    with fh:
        for win in windows:
            for var in METEO_VARIABLES:
                w.writerow([win.site_id, win.date.isoformat(), var, *map(_num, win.series[var])])


def write_reflectance(refl, path):
    fh, w = _writer(path, REFLECTANCE_HEADER)
    with fh:
        for (site_id, date), s in refl.items():
            w.writerow([site_id, date.isoformat(), *map(_num, s.bands), *map(_num, s.angles), s.state_qa])


# -- synthetic data ----------------------------------------------------------

#: Ratio of actual to reference ET per biome in the synthetic generator.
SYNTH_BIOME_FACTOR = {"CRO": 0.95, "GRA": 0.75, "DBF": 0.85, "WET": 1.05, "MF": 0.8, "ENF": 0.65, "OSH": 0.5}


@dataclass
class SynthTruth:
    """Raw records behind a synthetic table, and how its target was made."""

    sites: list
    flux: list
    windows: list
    reflectance: dict
    sigma: float
    biome_factor: dict = field(default_factory=dict)
    description: str = ""


def _synth_site_series(rng, site, first, n_days):
    days = [first + dt.timedelta(days=i) for i in range(n_days)]
    doy = np.array([d.timetuple().tm_yday for d in days], dtype=float)
    season = np.sin(2 * np.pi * (doy - 105) / 365.0)
    t_mean = 9.0 - 0.6 * (site.lat - 42.0) + rng.normal(0, 1.5)
    amp = 14.0 + rng.normal(0, 1.5)
    sp0 = 101.3 - rng.uniform(0, 8)
    t2m = t_mean + amp * season + rng.normal(0, 3.0, n_days)
    d2m = t2m - (np.abs(rng.normal(4.0, 2.5, n_days)) + 0.3)
    u10 = rng.normal(1.5, 2.5, n_days)
    v10 = rng.normal(0.5, 2.5, n_days)
    sp = sp0 + rng.normal(0, 0.6, n_days)
    ra = physics.extraterrestrial_radiation(site.lat, doy)
    clearness = np.clip(rng.normal(0.68, 0.18, n_days), 0.12, 1.0)
    ssr = 0.77 * 0.75 * ra * clearness
    tp = np.where(rng.random(n_days) < 0.3, rng.exponential(6.0, n_days), 0.0)
    series = dict(t2m=t2m, d2m=d2m, u10=u10, v10=v10, sp=sp, ssr=ssr, tp=tp, evap=np.zeros(n_days))
    return days, doy, season, series


def synth_dataset(n_sites, years, seed, sigma=5.0, start_year=2019):
    """Deterministic desk-scale dataset whose target is driven by PM ET0.

    Meteorology follows seasonal cycles with site offsets and daily noise.
    The target is ``et_depth_to_le(PM ET0 of the observation day)`` times a
    biome factor plus Gaussian noise of standard deviation ``sigma`` W m-2.
    Returns ``(table, truth)``.
    """
    if isinstance(n_sites, bool) or int(n_sites) != n_sites or n_sites < 2:
        raise ConfigError("n_sites must be an integer >= 2")
    if isinstance(years, bool) or int(years) != years or years < 1:
        raise ConfigError("years must be an integer >= 1")
    if not sigma >= 0:
        raise ConfigError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    biomes = list(SYNTH_BIOME_FACTOR)
    sites = []
    for s in range(int(n_sites)):
        sites.append(
            SiteMeta(
                f"SY-{s:03d}",
                round(float(rng.uniform(37.0, 48.0)), 4),
                round(float(rng.uniform(-103.0, -83.0)), 4),
                igbp_code(biomes[s % len(biomes)]),
            )
        )
    first_obs = dt.date(start_year, 1, 1)
    last_obs = dt.date(start_year + int(years) - 1, 12, 31)
    first = first_obs - dt.timedelta(days=WINDOW_DAYS - 1)
    n_days = (last_obs - first).days + 1

    flux, windows, refl = [], [], {}
    for site in sites:
        days, doy, season, series = _synth_site_series(rng, site, first, n_days)
        factor = SYNTH_BIOME_FACTOR[IGBP_NAMES[site.igbp]]
        et0 = pm_et0_daily(series, site.lat, doy)
        # Evaporation proxy tracks the reference ET of each day.
        series["evap"][:] = np.maximum(0.0, 0.6 * et0 + rng.normal(0, 0.3, n_days))
        for i in range(WINDOW_DAYS - 1, n_days):
            win = MeteoWindow(
                site.site_id, days[i], {v: series[v][i - WINDOW_DAYS + 1 : i + 1].copy() for v in METEO_VARIABLES}
            )
            windows.append(win)
            le = float(physics.et_depth_to_le(et0[i])) * factor + (rng.normal(0, sigma) if sigma > 0 else 0.0)
            qc = float(rng.uniform(0.75, 1.0)) if rng.random() < 0.9 else float(rng.uniform(0.4, 0.75))
            flux.append(FluxObservation(site.site_id, days[i], le, round(qc, 4)))
            if rng.random() < 0.15:
                continue
            green = float(np.clip(0.25 + 0.6 * max(season[i], 0.0) * factor + rng.normal(0, 0.05), 0, 1))
            cloudy = rng.random() < 0.2
            haze = 0.25 if cloudy else 0.0
            bands = (
                0.09 - 0.06 * green + haze + rng.normal(0, 0.005),
                0.18 + 0.32 * green + haze + rng.normal(0, 0.01),
                0.05 - 0.01 * green + haze + rng.normal(0, 0.004),
                0.07 + 0.03 * green + haze + rng.normal(0, 0.004),
                0.17 + 0.30 * green + haze + rng.normal(0, 0.01),
                0.22 - 0.05 * green + haze + rng.normal(0, 0.01),
                0.15 - 0.06 * green + haze + rng.normal(0, 0.01),
            )
            qa = (1 if cloudy else 0) | (4 if rng.random() < 0.05 else 0) | (int(rng.integers(0, 8)) << 3)
            refl[(site.site_id, days[i])] = ReflectanceSample(
                tuple(round(b, 5) for b in bands),
                round(float(rng.uniform(0, 65)), 2),
                round(float(rng.uniform(-180, 180)), 2),
                round(float(np.clip(site.lat - 23.44 * season[i], 0, 90)), 2),
                round(float(rng.uniform(-180, 180)), 2),
                qa,
            )

    kept = [f for f in flux if f.qc >= DEFAULT_QC_MIN]
    table = join_dataset(sites, kept, windows, refl)
    truth = SynthTruth(
        sites=sites,
        flux=flux,
        windows=windows,
        reflectance=refl,
        sigma=sigma,
        biome_factor=dict(SYNTH_BIOME_FACTOR),
        description=(
            "LE = et_depth_to_le(max(PM ET0 on the observation day, 0)) * biome_factor[igbp]"
            f" + N(0, {sigma}^2) W m-2; rows with QC < {DEFAULT_QC_MIN} excluded from the table"
        ),
    )
    return table, truth


def write_synth(truth: SynthTruth, out_dir) -> dict:
    """Write the four ingestion CSVs for a synthetic dataset."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "sites": out / "sites.csv",
        "flux": out / "flux.csv",
        "meteo": out / "meteo.csv",
        "reflectance": out / "reflectance.csv",
    }
    write_sites(truth.sites, paths["sites"])
    write_flux(truth.flux, paths["flux"])
    write_meteo_windows(truth.windows, paths["meteo"])
    write_reflectance(truth.reflectance, paths["reflectance"])
    return paths
