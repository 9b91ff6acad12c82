"""
A small gridded ET product
==========================

Predicts a month of daily grids from point inputs, sums them into a
monthly total and round-trips the result through the ETGRID format.
"""

import datetime as dt
import tempfile
from pathlib import Path

import numpy as np

from et_upscale import gridio
from et_upscale.gbdt import fit, lightgbm_config
from et_upscale.ingest import synth_dataset

table, truth = synth_dataset(4, 1, seed=3)
model = fit(table, lightgbm_config(n_estimators=40))

# Each cell borrows the inputs of its nearest synthetic site.
provider = gridio.PointFeatureProvider(truth.sites, truth.windows, truth.reflectance)
lats = [s.lat for s in truth.sites]
lons = [s.lon for s in truth.sites]
spec = gridio.GridSpec(min(lats) - 0.5, max(lats) + 0.5, min(lons) - 0.5, max(lons) + 0.5, 0.25)
print(f"grid of {spec.n_rows} x {spec.n_cols} cells")

days = [dt.date(2019, 6, d) for d in range(1, 31)]
daily = [gridio.convert_units(gridio.predict_grid(model, provider, spec, d, n_jobs=2), gridio.MM_DAY) for d in days]
monthly = gridio.monthly_aggregate(daily, require_complete=True)
print(f"June total: {np.nanmin(monthly.values):.1f} to {np.nanmax(monthly.values):.1f} mm")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / gridio.grid_filename(monthly.date, monthly=True)
    gridio.write_grid(monthly, path)
    back = gridio.read_grid(path)
    print(f"{path.name}: {path.stat().st_size} bytes, identical after reading back: {back.identical(monthly)}")
