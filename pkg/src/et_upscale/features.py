"""Feature engineering: 30-day meteorology statistics, vegetation indices,
cloud-QA decoding, the Penman-Monteith feature block and the flat,
schema-ordered feature vector consumed by the tree learners.
"""
from __future__ import annotations

import datetime as dt
import hashlib
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import physics
from .errors import (
    InvalidInputError,
    InvalidSeriesError,
    LaggedInputError,
    SchemaVersionError,
)

SCHEMA_VERSION = "etup-features-1"
WINDOW_DAYS = 30
SHORT_WINDOW_DAYS = 7

METEO_VARIABLES = ("t2m", "d2m", "u10", "v10", "sp", "ssr", "evap", "tp")
CUMULATIVE_VARIABLES = frozenset({"ssr", "evap", "tp"})
STAT_NAMES = ("last", "min", "max", "std", "roll30", "roll7")
BAND_NAMES = ("red", "nir1", "blue", "green", "nir2", "swir1", "swir2")
ANGLE_NAMES = ("sensor_zenith", "sensor_azimuth", "solar_zenith", "solar_azimuth")
VI_NAMES = ("ndvi", "evi", "gndvi", "savi", "arvi")
META_NAMES = ("lat", "lon", "doy", "igbp")

#: IGBP land-cover classes mapped to the integer codes the trees split on.
IGBP_CODES = {
    name: code
    for code, name in enumerate(
        (
            "CRO", "DBF", "ENF", "GRA", "MF", "WET", "OSH",
            "EBF", "DNF", "CSH", "WSA", "SAV", "URB", "SNO", "BSV", "CVM", "WAT",
        )
    )
}
IGBP_NAMES = {code: name for name, code in IGBP_CODES.items()}

_VI_EPS = 1e-9


def igbp_code(igbp) -> int:
    """Integer code for an IGBP label or an already-encoded integer."""
    if isinstance(igbp, str):
        try:
            return IGBP_CODES[igbp.strip().upper()]
        except KeyError:
            raise InvalidInputError(f"unknown IGBP class {igbp!r}") from None
    code = int(igbp)
    if code not in IGBP_NAMES:
        raise InvalidInputError(f"unknown IGBP code {igbp!r}")
    return code


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered ``(name, group)`` slots of a feature vector."""

    slots: tuple[tuple[str, str], ...]
    version: str = SCHEMA_VERSION

    def __post_init__(self):
        names = [n for n, _ in self.slots]
        if len(set(names)) != len(names):
            raise InvalidInputError("feature names must be unique")

    def __len__(self):
        return len(self.slots)

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.slots]

    @property
    def groups(self) -> list[str]:
        return [g for _, g in self.slots]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def indices(self, group: str) -> list[int]:
        return [i for i, (_, g) in enumerate(self.slots) if g == group]

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "slots": [{"name": n, "group": g} for n, g in self.slots],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FeatureSchema":
        try:
            slots = tuple((s["name"], s["group"]) for s in doc["slots"])
            return cls(slots=slots, version=doc["version"])
        except (KeyError, TypeError) as exc:
            raise SchemaVersionError(f"malformed feature schema: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_json(cls, text: str) -> "FeatureSchema":
        return cls.from_dict(json.loads(text))

    @property
    def digest(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def default_schema() -> FeatureSchema:
    slots = [(f"{v}_{s}", "weather") for v in METEO_VARIABLES for s in STAT_NAMES]
    slots += [(b, "reflectance") for b in BAND_NAMES]
    slots += [(a, "geometry") for a in ANGLE_NAMES]
    slots += [("cloud_flag", "reflectance")]
    slots += [(v, "vi") for v in VI_NAMES]
    slots += [(f"pm_et0_{s}", "kgml") for s in STAT_NAMES]
    slots += [(m, "meta") for m in META_NAMES]
    return FeatureSchema(tuple(slots))


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    schema: FeatureSchema

    def __post_init__(self):
        if self.values.shape != (len(self.schema),):
            raise InvalidInputError("feature vector length does not match schema")

    def __getitem__(self, name):
        return self.values[self.schema.index(name)]


@dataclass(frozen=True)
class SeriesStats:
    last: float
    min: float
    max: float
    std: float
    roll30: float
    roll7: float

    def as_tuple(self) -> tuple[float, ...]:
        return (self.last, self.min, self.max, self.std, self.roll30, self.roll7)


@dataclass(frozen=True)
class MeteoWindow:
    """30 days of each reanalysis variable for one site-day, oldest first;
    the final element is the observation day."""

    site_id: str
    date: dt.date
    series: Mapping[str, np.ndarray] = field(repr=False)

    def __post_init__(self):
        missing = [v for v in METEO_VARIABLES if v not in self.series]
        if missing:
            raise InvalidSeriesError(f"window lacks variables: {', '.join(missing)}")
        fixed = {}
        for name in METEO_VARIABLES:
            arr = np.asarray(self.series[name], dtype=float)
            if arr.shape != (WINDOW_DAYS,):
                raise InvalidSeriesError(f"{name}: expected {WINDOW_DAYS} values, got {arr.shape}")
            arr.setflags(write=False)
            fixed[name] = arr
        object.__setattr__(self, "series", fixed)

    def day(self, lag: int) -> physics.MeteoDay:
        """Meteorology ``lag`` days before the observation day."""
        i = WINDOW_DAYS - 1 - lag
        return physics.MeteoDay(**{v: float(self.series[v][i]) for v in METEO_VARIABLES})


@dataclass(frozen=True)
class ReflectanceSample:
    bands: tuple[float, ...]
    sensor_zenith: float
    sensor_azimuth: float
    solar_zenith: float
    solar_azimuth: float
    state_qa: int

    def __post_init__(self):
        bands = tuple(float(b) for b in self.bands)
        if len(bands) != len(BAND_NAMES) or not np.all(np.isfinite(bands)):
            raise InvalidInputError("reflectance needs 7 finite band values")
        object.__setattr__(self, "bands", bands)
        for name in ("sensor_zenith", "solar_zenith"):
            if not 0 <= getattr(self, name) <= 180:
                raise InvalidInputError(f"{name} outside [0, 180]")
        for name in ("sensor_azimuth", "solar_azimuth"):
            if not -180 <= getattr(self, name) <= 180:
                raise InvalidInputError(f"{name} outside [-180, 180]")
        if not 0 <= int(self.state_qa) <= 0xFFFF:
            raise InvalidInputError("state_qa must be a 16-bit unsigned integer")

    @property
    def angles(self) -> tuple[float, float, float, float]:
        return (self.sensor_zenith, self.sensor_azimuth, self.solar_zenith, self.solar_azimuth)


def series_stats(series, kind="instantaneous") -> SeriesStats:
    """Summary statistics of a 30-value daily series.

    ``kind="cumulative"`` turns the two rolling statistics into trailing
    sums instead of means. The standard deviation uses the population
    denominator.
    """
    if kind not in ("instantaneous", "cumulative"):
        raise InvalidInputError(f"unknown series kind {kind!r}")
    arr = np.asarray(series, dtype=float)
    if arr.shape != (WINDOW_DAYS,):
        raise InvalidSeriesError(f"expected {WINDOW_DAYS} values, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidSeriesError("series contains non-finite values")
    tail = arr[-SHORT_WINDOW_DAYS:]
    if kind == "cumulative":
        roll30, roll7 = arr.sum(), tail.sum()
    else:
        roll30, roll7 = arr.mean(), tail.mean()
    return SeriesStats(
        last=float(arr[-1]),
        min=float(arr.min()),
        max=float(arr.max()),
        std=float(arr.std()),
        roll30=float(roll30),
        roll7=float(roll7),
    )


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    bad = np.abs(den) < _VI_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(bad, np.nan, num / np.where(bad, 1.0, den))
    return out[()] if out.ndim == 0 else out


def vegetation_indices(bands) -> dict:
    """NDVI, EVI, GNDVI, SAVI and ARVI from the seven reflectance bands.

    ``bands`` is ordered Red, NIR1, Blue, Green, NIR2, SWIR1, SWIR2 (a
    trailing axis of length 7 works too). EVI carries no 2.5 gain and ARVI
    uses NIR - 2 Red + Blue in the numerator; both are computed exactly in
    that form. An index whose denominator is below 1e-9 in magnitude is NaN.
    """
    b = np.asarray(bands, dtype=float)
    red, nir, blue, green = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return {
        "ndvi": _ratio(nir - red, nir + red),
        "evi": _ratio(nir - red, nir + 6.0 * red - 7.5 * blue + 1.0),
        "gndvi": _ratio(nir - green, nir + green),
        "savi": _ratio(1.5 * (nir - red), nir + red + 0.5),
        "arvi": _ratio(nir - 2.0 * red + blue, nir + 2.0 * red - blue),
    }


def decode_cloud_qa(state_qa: int) -> int:
    """1 if the MOD09GA state word marks cloud (bits 0-1) or shadow (bit 2)."""
    state_qa = int(state_qa)
    return int((state_qa & 0b11) != 0 or (state_qa >> 2) & 1 == 1)


def daily_pm_series(window: MeteoWindow, lat: float) -> np.ndarray:
    """Penman-Monteith ET0 (mm day-1) for each day of ``window``, clipped at 0."""
    s = window.series
    doy = np.array(
        [
            (window.date - dt.timedelta(days=WINDOW_DAYS - 1 - i)).timetuple().tm_yday
            for i in range(WINDOW_DAYS)
        ],
        dtype=float,
    )
    try:
        et0 = _pm(s, lat, doy)
    except InvalidInputError:
        for i in range(WINDOW_DAYS):
            try:
                _pm({k: v[i : i + 1] for k, v in s.items()}, lat, doy[i : i + 1])
            except InvalidInputError as exc:
                raise LaggedInputError(WINDOW_DAYS - 1 - i, exc) from exc
        raise
    return np.maximum(et0, 0.0)


def pm_et0_daily(series, lat, doy) -> np.ndarray:
    """Penman-Monteith ET0 (mm day-1, clipped at 0) for aligned daily arrays
    of the meteorology variables, as used by the knowledge-guided features."""
    return np.maximum(_pm(series, lat, np.asarray(doy, dtype=float)), 0.0)


def _pm(s, lat, doy):
    t = s["t2m"]
    es = physics.saturation_vapor_pressure(t)
    # Supersaturated reanalysis days are evaluated at zero vapour deficit.
    ea = np.minimum(physics.actual_vapor_pressure(s["d2m"]), es)
    ra = physics.extraterrestrial_radiation(lat, doy)
    return physics.penman_monteith(
        rn=physics.net_radiation(s["ssr"], t, ea, ra),
        g=0.0,
        t=t,
        u2=physics.wind_speed_2m(s["u10"], s["v10"]),
        es=es,
        ea=ea,
        delta=physics.vapor_curve_slope(t),
        gamma=physics.psychrometric_constant(s["sp"]),
    )


def pm_feature_series(window: MeteoWindow, geo: physics.GeoTime) -> SeriesStats:
    """The six knowledge-guided features: statistics of daily PM ET0 over the
    window, with means (not sums) for the rolling terms."""
    return series_stats(daily_pm_series(window, geo.lat), "instantaneous")


def _check_schema(schema: FeatureSchema):
    if schema.version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"schema version {schema.version!r} != library version {SCHEMA_VERSION!r}"
        )
    if schema.slots != _DEFAULT.slots:
        raise SchemaVersionError(f"schema slots differ from layout {SCHEMA_VERSION!r}")


def assemble_features(
    window: MeteoWindow,
    refl: ReflectanceSample | None,
    geo: physics.GeoTime,
    igbp,
    doy: int,
    schema: FeatureSchema | None = None,
) -> FeatureVector:
    """Stack every feature family into one vector in schema order.

    A missing reflectance sample leaves the band, angle, cloud-flag and
    vegetation-index slots as NaN.
    """
    schema = _DEFAULT if schema is None else schema
    _check_schema(schema)
    out = np.full(len(schema), np.nan)
    pos = 0
    for var in METEO_VARIABLES:
        kind = "cumulative" if var in CUMULATIVE_VARIABLES else "instantaneous"
        out[pos : pos + 6] = series_stats(window.series[var], kind).as_tuple()
        pos += 6
    if refl is not None:
        out[pos : pos + 7] = refl.bands
        out[pos + 7 : pos + 11] = refl.angles
        out[pos + 11] = decode_cloud_qa(refl.state_qa)
        vis = vegetation_indices(refl.bands)
        out[pos + 12 : pos + 17] = [vis[v] for v in VI_NAMES]
    pos += 17
    out[pos : pos + 6] = pm_feature_series(window, geo).as_tuple()
    pos += 6
    out[pos : pos + 4] = (geo.lat, geo.lon, float(doy), float(igbp_code(igbp)))
    out.setflags(write=False)
    return FeatureVector(out, schema)


_DEFAULT = default_schema()
