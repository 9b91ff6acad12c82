"""Knowledge-guided upscaling of evapotranspiration from flux towers.

Subpackages and modules:

* :mod:`et_upscale.physics`: Penman-Monteith and Hargreaves-Samani closures
* :mod:`et_upscale.features`: feature schema and vector assembly
* :mod:`et_upscale.ingest`: CSV loaders, the training-table join, synthetic data
* :mod:`et_upscale.gbdt`: histogram gradient-boosted and bagged trees
* :mod:`et_upscale.evaluation`: metrics, grouped CV, grid search
* :mod:`et_upscale.gridio`: gridded inference and the ETGRID raster format
"""
from . import errors, evaluation, features, gbdt, gridio, ingest, physics

__version__ = "0.1.0"
