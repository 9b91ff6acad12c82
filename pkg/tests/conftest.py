import datetime as dt

import numpy as np
import pytest

from et_upscale.features import METEO_VARIABLES, MeteoWindow, ReflectanceSample
from et_upscale.ingest import synth_dataset


def sinusoidal_window(site_id="US-Ro1", date=dt.date(2020, 7, 15)):
    """The sinusoidal forcing used by the scripted feature oracle."""
    i = np.arange(30, dtype=float)
    series = dict(
        t2m=18 + 6 * np.sin(2 * np.pi * i / 30),
        d2m=10 + 3 * np.cos(2 * np.pi * i / 30),
        u10=2 + np.sin(i / 3),
        v10=-1 + np.cos(i / 5),
        sp=97.5 + 0.5 * np.sin(i / 7),
        ssr=22 + 4 * np.sin(2 * np.pi * i / 15),
        evap=np.linspace(1.0, 4.0, 30),
        tp=np.where(i % 6 == 0, 5.0, 0.0),
    )
    return MeteoWindow(site_id, date, series)


def constant_window(site_id="S1", date=dt.date(2020, 6, 1), **values):
    base = dict(t2m=20.0, d2m=12.0, u10=3.0, v10=4.0, sp=100.0, ssr=20.0, evap=2.0, tp=0.0)
    base.update(values)
    return MeteoWindow(site_id, date, {v: np.full(30, base[v]) for v in METEO_VARIABLES})


def sample_reflectance(state_qa=0):
    return ReflectanceSample((0.1, 0.5, 0.05, 0.08, 0.45, 0.2, 0.12), 10.0, 45.0, 30.0, 150.0, state_qa)


@pytest.fixture
def window():
    return sinusoidal_window()


@pytest.fixture(scope="session")
def small_synth():
    """Three sites, one year: a quick PM-driven table."""
    return synth_dataset(3, 1, seed=11)
