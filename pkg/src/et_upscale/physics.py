"""Daily reference-ET physics: vapour pressure, radiation, Penman-Monteith,
Hargreaves-Samani and the latent-heat/water-depth conversion.

Every function accepts scalars or numpy arrays and broadcasts. Scalar input
gives a numpy float64 back. Units follow the FAO-56 daily conventions:
temperatures in degC, pressures in kPa, radiation in MJ m-2 day-1.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateInputWarning, InvalidInputError, UnsupportedLatitudeError

#: Latent heat of vaporization, MJ kg-1 (held constant).
LAMBDA = 2.45
#: Seconds per day divided by 1e6: W m-2 -> MJ m-2 day-1.
W_TO_MJ_DAY = 0.0864
#: mm day-1 per W m-2 of latent heat flux.
LE_TO_MM_DAY = W_TO_MJ_DAY / LAMBDA
#: Stefan-Boltzmann constant, MJ K-4 m-2 day-1.
SIGMA_MJ = 4.903e-9
SOLAR_CONSTANT = 0.0820  # MJ m-2 min-1
DEFAULT_KT = 0.162
WIND_HEIGHT_M = 10.0
#: Log-profile factor that maps 10 m wind to 2 m wind.
WIND_10M_TO_2M = 4.87 / np.log(67.8 * WIND_HEIGHT_M - 5.42)

_MAX_LAT = 66.5


@dataclass(frozen=True)
class MeteoDay:
    """One day of reanalysis meteorology (units as in the module docstring;
    winds m s-1, ssr MJ m-2 day-1, evap and tp mm day-1)."""

    t2m: float
    d2m: float
    u10: float
    v10: float
    sp: float
    ssr: float
    evap: float
    tp: float

    def __post_init__(self):
        if not self.sp > 0:
            raise InvalidInputError(f"surface pressure must be positive, got {self.sp}")
        if not self.ssr >= 0:
            raise InvalidInputError(f"net solar radiation must be >= 0, got {self.ssr}")
        if not self.tp >= 0:
            raise InvalidInputError(f"precipitation must be >= 0, got {self.tp}")

    @property
    def supersaturated(self) -> bool:
        # Dewpoint above air temperature happens in reanalysis; kept, only flagged.
        return self.d2m > self.t2m


class PmInputs(NamedTuple):
    """Arguments of :func:`penman_monteith`, in call order."""

    rn: float
    g: float
    t: float
    u2: float
    es: float
    ea: float
    delta: float
    gamma: float


@dataclass(frozen=True)
class GeoTime:
    lat: float
    lon: float
    doy: int

    def __post_init__(self):
        if not -90 <= self.lat <= 90:
            raise InvalidInputError(f"latitude out of range: {self.lat}")
        if not -180 <= self.lon <= 180:
            raise InvalidInputError(f"longitude out of range: {self.lon}")
        if not 1 <= self.doy <= 366:
            raise InvalidInputError(f"day of year out of range: {self.doy}")


def _finite(name, x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must be finite")
    return arr


def _out(arr):
    return arr[()] if arr.ndim == 0 else arr


def saturation_vapor_pressure(t):
    """Saturation vapour pressure (kPa) at temperature ``t`` (degC), Tetens form."""
    t = _finite("temperature", t)
    if np.any(t <= -100):
        raise InvalidInputError("temperature must exceed -100 degC")
    return _out(0.6108 * np.exp(17.27 * t / (t + 237.3)))


def actual_vapor_pressure(tdew):
    """Actual vapour pressure (kPa) from dewpoint (degC)."""
    return saturation_vapor_pressure(tdew)


def vapor_curve_slope(t):
    """Slope of the saturation vapour pressure curve, kPa degC-1."""
    t = _finite("temperature", t)
    return _out(4098.0 * np.asarray(saturation_vapor_pressure(t)) / (t + 237.3) ** 2)


def psychrometric_constant(sp):
    """Psychrometric constant (kPa degC-1) for surface pressure ``sp`` in kPa."""
    sp = _finite("pressure", sp)
    if np.any(sp <= 0):
        raise InvalidInputError("surface pressure must be positive")
    return _out(0.000665 * sp)


def wind_speed_2m(u10, v10):
    """Horizontal wind speed at 2 m from the 10 m components."""
    u10 = _finite("u10", u10)
    v10 = _finite("v10", v10)
    return _out(np.hypot(u10, v10) * WIND_10M_TO_2M)


def extraterrestrial_radiation(lat, doy):
    """Daily top-of-atmosphere radiation, MJ m-2 day-1.

    ``doy`` may be fractional; the declination is zero near doy 80.75.
    Polar day and night are not handled, so ``|lat|`` must stay below 66.5.
    """
    lat = _finite("latitude", lat)
    doy = _finite("day of year", doy)
    if np.any(np.abs(lat) >= _MAX_LAT):
        raise UnsupportedLatitudeError(f"|latitude| must be < {_MAX_LAT}")
    if np.any((doy < 1) | (doy > 366)):
        raise InvalidInputError("day of year must lie in [1, 366]")
    phi = np.deg2rad(lat)
    b = 2.0 * np.pi * doy / 365.0
    dr = 1.0 + 0.033 * np.cos(b)
    decl = 0.409 * np.sin(b - 1.39)
    ws = np.arccos(-np.tan(phi) * np.tan(decl))
    ra = (24.0 * 60.0 / np.pi) * SOLAR_CONSTANT * dr * (
        ws * np.sin(phi) * np.sin(decl) + np.cos(phi) * np.cos(decl) * np.sin(ws)
    )
    return _out(ra)


def net_longwave_radiation(ssr, t, ea, ra):
    """FAO-56 net outgoing longwave radiation, MJ m-2 day-1.

    The relative shortwave ratio ``ssr / (0.75 ra)`` is held within
    [0.3, 1], as in the standardized form, so the cloudiness factor stays
    positive and the estimate is nonnegative for realistic humidity.
    """
    ratio = np.clip(ssr / (0.75 * ra), 0.3, 1.0)
    return (
        SIGMA_MJ
        * (t + 273.16) ** 4
        * (0.34 - 0.14 * np.sqrt(ea))
        * (1.35 * ratio - 0.35)
    )


def net_radiation(ssr, t, ea, ra):
    """Net all-wave radiation: net shortwave minus an FAO-56 longwave estimate.

    Can be negative when shortwave input is small.
    """
    ssr = _finite("net solar radiation", ssr)
    t = _finite("temperature", t)
    ea = _finite("actual vapour pressure", ea)
    ra = _finite("extraterrestrial radiation", ra)
    if np.any(ssr < 0):
        raise InvalidInputError("net solar radiation must be >= 0")
    if np.any(ra <= 0):
        raise InvalidInputError("extraterrestrial radiation must be positive")
    if np.any(ea < 0):
        raise InvalidInputError("actual vapour pressure must be >= 0")
    return _out(ssr - net_longwave_radiation(ssr, t, ea, ra))


def penman_monteith(rn, g, t, u2, es, ea, delta, gamma):
    """FAO-56 daily reference evapotranspiration, mm day-1.

    The raw value is returned; negative results (net radiation below soil
    heat flux) are not clipped here.
    """
    rn, g, t, u2, es, ea, delta, gamma = (
        _finite(n, v)
        for n, v in zip(PmInputs._fields, (rn, g, t, u2, es, ea, delta, gamma))
    )
    if np.any(u2 < 0):
        raise InvalidInputError("wind speed must be >= 0")
    if np.any(ea < 0) or np.any(es < ea):
        raise InvalidInputError("vapour pressures must satisfy es >= ea >= 0")
    if np.any(delta <= 0) or np.any(gamma <= 0):
        raise InvalidInputError("delta and gamma must be positive")
    radiative = 0.408 * delta * (rn - g)
    aerodynamic = gamma * (900.0 / (t + 273.0)) * u2 * (es - ea)
    return _out((radiative + aerodynamic) / (delta + gamma * (1.0 + 0.34 * u2)))


def hargreaves_samani(tavg, tmax, tmin, ra, kt=DEFAULT_KT, days=10):
    """Hargreaves-Samani ET over a dekad (mm dekad-1).

    ``ra`` is extraterrestrial radiation summed over the dekad and ``days``
    the dekad length, applied as a multiplicative factor. Both the
    coefficient ``0.135 * kt`` and the factor ``days`` are kept as written
    in the source formulation; the common textbook form uses ``0.0135 * kt``
    with a daily Ra, so values here are not comparable with it. Mean
    temperatures at or below -17.8 degC yield 0 and a
    :class:`DegenerateInputWarning`.
    """
    tavg = _finite("tavg", tavg)
    tmax = _finite("tmax", tmax)
    tmin = _finite("tmin", tmin)
    ra = _finite("ra", ra)
    if np.any(tmax < tmin):
        raise InvalidInputError("tmax must be >= tmin")
    if days not in (8, 9, 10, 11):
        raise InvalidInputError(f"dekad length must be 8-11 days, got {days}")
    if not kt > 0:
        raise InvalidInputError("KT must be positive")
    offset = tavg + 17.8
    degenerate = offset <= 0
    if np.any(degenerate & (tavg < -17.8)):
        warnings.warn("mean temperature below -17.8 degC, returning 0", DegenerateInputWarning)
    et = 0.135 * kt * offset * np.sqrt(tmax - tmin) * ra * 0.408 * days
    return _out(np.where(degenerate, 0.0, et))


def le_to_et_depth(value, direction="forward"):
    """Convert latent heat flux (W m-2) to water depth (mm day-1), or back
    with ``direction="inverse"``."""
    value = _finite("flux", value)
    if direction == "forward":
        return _out(value * W_TO_MJ_DAY / LAMBDA)
    if direction == "inverse":
        return _out(value * LAMBDA / W_TO_MJ_DAY)
    raise InvalidInputError(f"unknown direction {direction!r}")


def et_depth_to_le(depth):
    return le_to_et_depth(depth, "inverse")
