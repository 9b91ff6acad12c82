"""
Reference ET and the feature vector
===================================

Walks from the daily Penman-Monteith closures to the feature vector the
learner sees, on one synthetic 30-day window.
"""

import datetime as dt

import numpy as np

from et_upscale import physics
from et_upscale.features import assemble_features, pm_feature_series, vegetation_indices
from et_upscale.ingest import synth_dataset

# A textbook day: Penman-Monteith from its ready-made inputs, in mm/day.
et0 = physics.penman_monteith(13.28, 0.0, 16.9, 2.078, 1.997, 1.409, 0.122, 0.0666)
print(f"reference ET: {et0:.3f} mm/day")

# The same quantity as an energy flux, and back.
le = physics.et_depth_to_le(et0)
print(f"as latent heat: {le:.2f} W m-2 -> {physics.le_to_et_depth(le):.3f} mm/day")

# Hargreaves-Samani needs only temperatures and Ra summed over the dekad.
# Its coefficients and dekad-length factor are kept exactly as formulated,
# so the magnitude differs from the textbook daily form.
ra = [physics.extraterrestrial_radiation(44.7, d) for d in range(192, 202)]
print(f"Ra at 44.7N in mid July: {ra[5]:.2f} MJ m-2 day-1")
print(f"dekad value: {physics.hargreaves_samani(22.0, 29.0, 15.0, sum(ra)):.0f}")

# Vegetation indices follow the printed forms, so EVI has no 2.5 gain.
bands = (0.1, 0.5, 0.05, 0.08, 0.45, 0.2, 0.12)
for name, value in vegetation_indices(bands).items():
    print(f"{name:6s} {value:.4f}")

# A synthetic site provides real 30-day meteorology windows.
table, truth = synth_dataset(2, 1, seed=1)
window = truth.windows[200]
site = next(s for s in truth.sites if s.site_id == window.site_id)
doy = window.date.timetuple().tm_yday
geo = physics.GeoTime(site.lat, site.lon, doy)

# The six knowledge-guided features summarise daily PM ET0 over the window.
stats = pm_feature_series(window, geo)
print("PM ET0 window statistics:", np.round(stats.as_tuple(), 3))

vec = assemble_features(window, truth.reflectance.get((site.site_id, window.date)), geo, site.igbp, doy)
print(f"{len(vec.values)} features, {int(np.isnan(vec.values).sum())} missing")
