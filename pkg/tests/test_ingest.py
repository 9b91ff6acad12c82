import datetime as dt
import filecmp
import warnings

import numpy as np
import pytest

from conftest import constant_window, sample_reflectance
from et_upscale import ingest, physics
from et_upscale.errors import (
    ConfigError,
    DuplicateKeyError,
    HeaderError,
    IncompleteWindowError,
    RowParseError,
    SuspiciousValueWarning,
)
from et_upscale.features import METEO_VARIABLES, default_schema

DAY = dt.date(2020, 6, 1)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def meteo_csv(tmp_path, variables=METEO_VARIABLES, site="S1", date=DAY):
    w = constant_window(site, date)
    rows = [",".join(ingest.METEO_HEADER)]
    for v in variables:
        rows.append(",".join([site, date.isoformat(), v, *(repr(float(x)) for x in w.series[v])]))
    return write(tmp_path / "meteo.csv", "\n".join(rows) + "\n")


class TestSites:
    def test_reference_site_row(self, tmp_path):
        p = write(tmp_path / "s.csv", "site_id,lat,lon,igbp\nUS-Ro1,44.7143,-93.0898,CRO\n")
        (site,) = ingest.load_sites(p)
        assert site == ingest.SiteMeta("US-Ro1", 44.7143, -93.0898, 0)

    def test_empty_file(self, tmp_path):
        assert ingest.load_sites(write(tmp_path / "s.csv", "")) == []

    def test_duplicate_id(self, tmp_path):
        p = write(tmp_path / "s.csv", "site_id,lat,lon,igbp\nA,40,-90,CRO\nA,41,-91,GRA\n")
        with pytest.raises(DuplicateKeyError):
            ingest.load_sites(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            ingest.load_sites(tmp_path / "absent.csv")

    def test_unknown_biome(self, tmp_path):
        p = write(tmp_path / "s.csv", "site_id,lat,lon,igbp\nA,40,-90,XXX\n")
        with pytest.raises(RowParseError):
            ingest.load_sites(p)


class TestFlux:
    text = "site_id,date,le_f_mds,le_f_mds_qc\nS1,2020-06-01,80.5,0.75\nS1,2020-06-02,70.0,0.74\n"

    def test_boundary_inclusive(self, tmp_path):
        rows = ingest.load_flux(write(tmp_path / "f.csv", self.text))
        assert [r.date for r in rows] == [DAY]
        assert rows[0].qc == 0.75

    def test_filter_disabled(self, tmp_path):
        assert len(ingest.load_flux(write(tmp_path / "f.csv", self.text), qc_min=0)) == 2

    def test_bad_number_reports_line(self, tmp_path):
        p = write(tmp_path / "f.csv", self.text + "S1,2020-06-03,abc,0.9\n")
        with pytest.raises(RowParseError) as err:
            ingest.load_flux(p)
        assert err.value.line == 4

    def test_bad_date(self, tmp_path):
        p = write(tmp_path / "f.csv", "site_id,date,le_f_mds,le_f_mds_qc\nS1,06/01/2020,1,1\n")
        with pytest.raises(RowParseError):
            ingest.load_flux(p)

    def test_qc_outside_unit_interval(self, tmp_path):
        p = write(tmp_path / "f.csv", "site_id,date,le_f_mds,le_f_mds_qc\nS1,2020-06-01,1,1.2\n")
        with pytest.raises(RowParseError):
            ingest.load_flux(p)


class TestMeteo:
    def test_complete_window(self, tmp_path):
        (w,) = ingest.load_meteo_windows(meteo_csv(tmp_path))
        assert w.site_id == "S1" and w.date == DAY
        assert w.series["u10"].tolist() == [3.0] * 30

    def test_incomplete_window_names_variable(self, tmp_path):
        with pytest.raises(IncompleteWindowError) as err:
            ingest.load_meteo_windows(meteo_csv(tmp_path, METEO_VARIABLES[:-1]))
        assert err.value.missing == ("tp",)

    def test_lag_order_checked(self, tmp_path):
        header = ingest.METEO_HEADER.copy()
        header[3], header[4] = header[4], header[3]
        p = write(tmp_path / "m.csv", ",".join(header) + "\n")
        with pytest.raises(HeaderError):
            ingest.load_meteo_windows(p)


class TestReflectance:
    header = ",".join(ingest.REFLECTANCE_HEADER)

    def test_row_parses(self, tmp_path):
        p = write(tmp_path / "r.csv", self.header + "\nS1,2020-06-01,0.1,0.5,0.05,0.08,0.45,0.2,0.12,10,45,30,150,3\n")
        samples = ingest.load_reflectance(p)
        s = samples[("S1", DAY)]
        assert s.bands[1] == 0.5 and s.state_qa == 0b11

    def test_suspicious_band_kept(self, tmp_path):
        p = write(tmp_path / "r.csv", self.header + "\nS1,2020-06-01,0.1,1.9,0.05,0.08,0.45,0.2,0.12,10,45,30,150,0\n")
        with pytest.warns(SuspiciousValueWarning):
            assert len(ingest.load_reflectance(p)) == 1

    def test_non_integer_qa(self, tmp_path):
        p = write(tmp_path / "r.csv", self.header + "\nS1,2020-06-01,0.1,0.5,0.05,0.08,0.45,0.2,0.12,10,45,30,150,1.5\n")
        with pytest.raises(RowParseError):
            ingest.load_reflectance(p)


class TestJoin:
    sites = [ingest.SiteMeta("S1", 44.0, -93.0, 0)]

    def flux(self, date=DAY):
        return [ingest.FluxObservation("S1", date, 90.0, 0.9)]

    def test_all_sources(self):
        t = ingest.join_dataset(self.sites, self.flux(), [constant_window()], {("S1", DAY): sample_reflectance()})
        assert len(t) == 1 and t.groups == ("S1:2020",) and t.months.tolist() == [6]
        assert not np.isnan(t.X).any()

    def test_missing_window(self):
        t = ingest.join_dataset(self.sites, self.flux(DAY + dt.timedelta(days=1)), [constant_window()])
        assert len(t) == 0 and t.dropped == 1

    def test_missing_reflectance(self):
        t = ingest.join_dataset(self.sites, self.flux(), [constant_window()])
        assert len(t) == 1
        refl = t.schema.indices("reflectance") + t.schema.indices("vi")
        assert np.isnan(t.X[0, refl]).all()

    def test_row_count_bound(self):
        windows = [constant_window(date=DAY + dt.timedelta(days=k)) for k in range(3)]
        flux = [ingest.FluxObservation("S1", DAY + dt.timedelta(days=k), 50.0, 1.0) for k in range(5)]
        t = ingest.join_dataset(self.sites, flux, windows)
        assert len(t) == 3 <= min(len(flux), len(windows)) and t.dropped == 2


class TestSynth:
    def test_deterministic(self):
        a, _ = ingest.synth_dataset(2, 1, seed=5)
        b, _ = ingest.synth_dataset(2, 1, seed=5)
        assert a.X.tobytes() == b.X.tobytes() and a.y.tobytes() == b.y.tobytes()

    def test_noiseless_target(self):
        table, truth = ingest.synth_dataset(2, 1, seed=5, sigma=0.0)
        pm = table.X[:, table.schema.index("pm_et0_last")]
        factor = np.array([truth.biome_factor[n] for n in (ingest.IGBP_NAMES[c] for c in table.igbp)])
        np.testing.assert_allclose(table.y, physics.et_depth_to_le(pm) * factor, rtol=1e-12, atol=1e-12)

    def test_site_year_count(self, small_synth):
        table, truth = small_synth
        assert len(set(table.groups)) == 3
        assert all(g == f"{s}:{d.year}" for g, s, d in zip(table.groups, table.site_ids, table.dates))

    def test_four_sites_three_years(self):
        _, truth = ingest.synth_dataset(4, 3, seed=0)
        groups = {f"{f.site_id}:{f.date.year}" for f in truth.flux}
        assert len(groups) == 12

    def test_qc_filter_applied(self, small_synth):
        table, truth = small_synth
        kept = sum(f.qc >= 0.75 for f in truth.flux)
        assert len(table) == kept < len(truth.flux)

    def test_ndvi_follows_season(self, small_synth):
        table, _ = small_synth
        ndvi = table.X[:, table.schema.index("ndvi")]
        cloud = table.X[:, table.schema.index("cloud_flag")]
        ok = np.isfinite(ndvi) & (cloud == 0)
        summer = ok & np.isin(table.months, [6, 7, 8])
        winter = ok & np.isin(table.months, [12, 1, 2])
        assert ndvi[summer].mean() > ndvi[winter].mean() + 0.1

    @pytest.mark.parametrize("n_sites, years", [(1, 1), (2, 0), (2.5, 1)])
    def test_invalid_sizes(self, n_sites, years):
        with pytest.raises(ConfigError):
            ingest.synth_dataset(n_sites, years, seed=0)

    def test_csv_round_trip(self, tmp_path, small_synth):
        table, truth = small_synth
        paths = ingest.write_synth(truth, tmp_path / "a")
        again = ingest.load_dataset(paths["sites"], paths["flux"], paths["meteo"], paths["reflectance"])
        assert again.X.tobytes() == table.X.tobytes()
        assert again.y.tobytes() == table.y.tobytes()

    def test_serialisation_bytewise_stable(self, tmp_path):
        _, t1 = ingest.synth_dataset(2, 1, seed=9)
        _, t2 = ingest.synth_dataset(2, 1, seed=9)
        p1, p2 = ingest.write_synth(t1, tmp_path / "x"), ingest.write_synth(t2, tmp_path / "y")
        for key in p1:
            assert filecmp.cmp(p1[key], p2[key], shallow=False)
