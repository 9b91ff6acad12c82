"""Histogram-based gradient-boosted and bagged regression trees."""
from .binning import BinnedData, bin_column, build_bins
from .config import TrainConfig, lightgbm_config, random_forest_config, xgboost_config
from .ensemble import (
    Ensemble,
    ImportanceReport,
    feature_importance_gain,
    fit,
    fit_arrays,
    node_gains,
    predict,
)
from .io import load_model, model_from_dict, model_to_dict, save_model, schema_sidecar
from .splitting import (
    SplitCandidate,
    best_split,
    build_histograms,
    exact_best_split,
    find_node_splits,
)
from .tree import Tree, grow_tree
