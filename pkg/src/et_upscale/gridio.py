"""Gridded inference, unit conversion, monthly sums and the ETGRID format.

ETGRID v1 layout::

    bytes 0-7   b"ETGRID01"
    bytes 8-11  header length L, little-endian uint32
    next L      UTF-8 JSON header {spec, date, unit, n_rows, n_cols}
    remainder   n_rows * n_cols little-endian float32, row-major, row 0 north

Files are named ``et_YYYY-MM-DD.etg`` (daily) or ``et_YYYY-MM.etg`` (monthly).
"""
from __future__ import annotations

import calendar
import csv
import datetime as dt
import json
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import physics
from .errors import GridFormatError, SchemaMismatchError, UnitError
from .features import FeatureVector, assemble_features, default_schema

MAGIC = b"ETGRID01"
W_M2 = "W m-2"
MM_DAY = "mm day-1"
MM_MONTH = "mm month-1"
UNITS = (W_M2, MM_DAY, MM_MONTH)


@dataclass(frozen=True)
class GridSpec:
    """Regular lat/lon grid; the default covers the released product domain
    at 0.0045 degrees (about 500 m of latitude)."""

    lat_min: float = 36.0
    lat_max: float = 49.0
    lon_min: float = -104.0
    lon_max: float = -82.0
    cell_deg: float = 0.0045

    def __post_init__(self):
        for name in ("lat_min", "lat_max", "lon_min", "lon_max", "cell_deg"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if not self.lat_max > self.lat_min or not self.lon_max > self.lon_min:
            raise ValueError("grid bounds must satisfy max > min")
        if not self.cell_deg > 0:
            raise ValueError("cell_deg must be positive")
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("grid must have at least one row and column")

    @property
    def n_rows(self) -> int:
        return int(round((self.lat_max - self.lat_min) / self.cell_deg))

    @property
    def n_cols(self) -> int:
        return int(round((self.lon_max - self.lon_min) / self.cell_deg))

    @property
    def shape(self):
        return self.n_rows, self.n_cols

    def lat_centers(self) -> np.ndarray:
        """Cell-center latitudes, north first."""
        return self.lat_max - (np.arange(self.n_rows) + 0.5) * self.cell_deg

    def lon_centers(self) -> np.ndarray:
        return self.lon_min + (np.arange(self.n_cols) + 0.5) * self.cell_deg

    def to_dict(self):
        return {
            "lat_min": self.lat_min,
            "lat_max": self.lat_max,
            "lon_min": self.lon_min,
            "lon_max": self.lon_max,
            "cell_deg": self.cell_deg,
        }

    @classmethod
    def from_dict(cls, doc):
        return cls(**{k: float(v) for k, v in doc.items()})


@dataclass(frozen=True, eq=False)
class EtGrid:
    spec: GridSpec
    date: dt.date
    values: np.ndarray
    unit: str = W_M2

    def __post_init__(self):
        if self.unit not in UNITS:
            raise UnitError(f"unknown unit {self.unit!r}")
        values = np.asarray(self.values)
        if values.dtype != np.float32:
            values = values.astype(np.float32)
        if values.shape != self.spec.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {self.spec.shape}")
        object.__setattr__(self, "values", values)

    def identical(self, other) -> bool:
        """Equal spec, date and unit, and bit-identical values."""
        return (
            self.spec == other.spec
            and self.date == other.date
            and self.unit == other.unit
            and self.values.tobytes() == other.values.tobytes()
        )


def grid_filename(date: dt.date, monthly=False) -> str:
    return f"et_{date:%Y-%m}.etg" if monthly else f"et_{date.isoformat()}.etg"


def predict_grid(ensemble, feature_provider, spec: GridSpec, date, n_jobs=1, schema=None) -> EtGrid:
    """Evaluate ``ensemble`` at every cell center of ``spec`` (W m-2).

    ``feature_provider(lat, lon, date)`` returns a FeatureVector, a plain
    vector, or None for a missing cell (NaN). The provider's schema, taken
    from ``schema`` or a ``schema`` attribute on the provider, is checked
    against the model before any cell is evaluated. Rows are split across
    ``n_jobs`` threads; the result does not depend on it.
    """
    schema = schema if schema is not None else getattr(feature_provider, "schema", None)
    model_schema = getattr(ensemble, "schema", None)
    if schema is not None and model_schema is not None and schema.digest != model_schema.digest:
        raise SchemaMismatchError("feature provider schema differs from the model schema")
    lats, lons = spec.lat_centers(), spec.lon_centers()
    out = np.full(spec.shape, np.nan, dtype=np.float32)

    def run_row(i):
        cols, vecs = [], []
        for j, lon in enumerate(lons):
            vec = feature_provider(float(lats[i]), float(lon), date)
            if vec is None:
                continue
            if isinstance(vec, FeatureVector):
                if model_schema is not None and vec.schema.digest != model_schema.digest:
                    raise SchemaMismatchError("feature vector schema differs from the model schema")
                vec = vec.values
            cols.append(j)
            vecs.append(np.asarray(vec, dtype=float))
        if cols:
            out[i, cols] = ensemble.predict(np.vstack(vecs))

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            list(pool.map(run_row, range(spec.n_rows)))
    else:
        for i in range(spec.n_rows):
            run_row(i)
    return EtGrid(spec, date, out, W_M2)


def convert_units(grid: EtGrid, target: str) -> EtGrid:
    """Convert between W m-2 and mm day-1 (factor 0.0864 / 2.45)."""
    pair = (grid.unit, target)
    # Same arithmetic as physics.le_to_et_depth, but NaN cells pass through.
    if pair == (W_M2, MM_DAY):
        values = grid.values.astype(np.float64) * physics.W_TO_MJ_DAY / physics.LAMBDA
    elif pair == (MM_DAY, W_M2):
        values = grid.values.astype(np.float64) * physics.LAMBDA / physics.W_TO_MJ_DAY
    elif grid.unit == target:
        values = grid.values.copy()
    else:
        raise UnitError(f"cannot convert {grid.unit} to {target}")
    return EtGrid(grid.spec, grid.date, np.asarray(values, dtype=np.float32), target)


def monthly_aggregate(grids, require_complete=False) -> EtGrid:
    """Cell-wise sum of daily mm day-1 grids of one calendar month.

    A NaN on any contributing day gives NaN at that cell. The inputs are
    summed in date order, so the result does not depend on list order.
    """
    grids = sorted(grids, key=lambda g: g.date)
    if not grids:
        raise ValueError("no grids to aggregate")
    first = grids[0]
    if any(g.spec != first.spec for g in grids):
        raise ValueError("grids have different specs")
    if any((g.date.year, g.date.month) != (first.date.year, first.date.month) for g in grids):
        raise ValueError("grids span more than one calendar month")
    if any(g.unit != MM_DAY for g in grids):
        raise UnitError(f"monthly sums need daily grids in {MM_DAY}")
    dates = [g.date for g in grids]
    if len(set(dates)) != len(dates):
        raise ValueError("duplicate dates in monthly input")
    if require_complete:
        n_days = calendar.monthrange(first.date.year, first.date.month)[1]
        if len(dates) != n_days:
            have = {d.day for d in dates}
            missing = [d for d in range(1, n_days + 1) if d not in have]
            raise ValueError(f"month incomplete, missing days {missing}")
    total = np.zeros(first.spec.shape, dtype=np.float64)
    for g in grids:
        total += g.values
    return EtGrid(first.spec, first.date.replace(day=1), total.astype(np.float32), MM_MONTH)


def _header(grid: EtGrid) -> bytes:
    doc = {
        "spec": grid.spec.to_dict(),
        "date": grid.date.isoformat(),
        "unit": grid.unit,
        "n_rows": grid.spec.n_rows,
        "n_cols": grid.spec.n_cols,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def grid_to_bytes(grid: EtGrid) -> bytes:
    header = _header(grid)
    payload = grid.values.astype("<f4", copy=False).tobytes(order="C")
    return MAGIC + struct.pack("<I", len(header)) + header + payload


def grid_from_bytes(blob: bytes) -> EtGrid:
    if len(blob) < 12 or blob[:8] != MAGIC:
        raise GridFormatError("not an ETGRID01 file (bad magic)")
    (n_header,) = struct.unpack("<I", blob[8:12])
    if len(blob) < 12 + n_header:
        raise GridFormatError("truncated header")
    try:
        doc = json.loads(blob[12 : 12 + n_header].decode("utf-8"))
        spec = GridSpec.from_dict(doc["spec"])
        date = dt.date.fromisoformat(doc["date"])
        unit = doc["unit"]
        n_rows, n_cols = int(doc["n_rows"]), int(doc["n_cols"])
    except (ValueError, KeyError, TypeError) as exc:
        raise GridFormatError(f"bad header: {exc}") from None
    if (n_rows, n_cols) != spec.shape:
        raise GridFormatError("header dimensions disagree with the grid spec")
    payload = blob[12 + n_header :]
    if len(payload) != 4 * n_rows * n_cols:
        raise GridFormatError(f"payload has {len(payload)} bytes, expected {4 * n_rows * n_cols}")
    values = np.frombuffer(payload, dtype="<f4").reshape(n_rows, n_cols).astype(np.float32)
    try:
        return EtGrid(spec, date, values, unit)
    except UnitError as exc:
        raise GridFormatError(str(exc)) from None


def write_grid(grid: EtGrid, path):
    Path(path).write_bytes(grid_to_bytes(grid))


def read_grid(path) -> EtGrid:
    return grid_from_bytes(Path(path).read_bytes())


def grid_to_csv(grid: EtGrid, path):
    """Rows ``lat,lon,value`` at cell centers, north to south; NaN cells
    have an empty value."""
    lats, lons = grid.spec.lat_centers(), grid.spec.lon_centers()
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["lat", "lon", "value"])
        for i, lat in enumerate(lats):
            for j, lon in enumerate(lons):
                v = float(grid.values[i, j])
                w.writerow([repr(round(float(lat), 9)), repr(round(float(lon), 9)), "" if v != v else f"{v:.9g}"])


class PointFeatureProvider:
    """Feature provider backed by gridded-input points.

    Each cell takes the meteorology and reflectance of its nearest input
    point (plain distance in degrees, ties to the earlier point), with the
    cell's own coordinates in the geometry and PM terms. A cell whose
    point has no window for the date is missing.
    """

    def __init__(self, sites, windows, reflectance=None, schema=None):
        if not sites:
            raise ValueError("no gridded-input points")
        self.sites = list(sites)
        self.schema = default_schema() if schema is None else schema
        self._lat = np.array([s.lat for s in self.sites])
        self._lon = np.array([s.lon for s in self.sites])
        self._windows = {(w.site_id, w.date): w for w in windows}
        self._refl = reflectance or {}

    def nearest(self, lat, lon):
        d2 = (self._lat - lat) ** 2 + (self._lon - lon) ** 2
        return self.sites[int(np.argmin(d2))]

    def __call__(self, lat, lon, date):
        site = self.nearest(lat, lon)
        window = self._windows.get((site.site_id, date))
        if window is None:
            return None
        doy = date.timetuple().tm_yday
        geo = physics.GeoTime(lat, lon, doy)
        return assemble_features(window, self._refl.get((site.site_id, date)), geo, site.igbp, doy, self.schema)
