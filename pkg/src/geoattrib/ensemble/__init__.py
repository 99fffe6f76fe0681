"""Bootstrap-aggregated gradient-boosted trees with uncertainty ranges."""

from .gbt import GbtModel, GbtParams, train_gbt
from .bagging import (BaggedConfig, BaggedEnsemble, SplitPlan, bootstrap_sample,
                      derive_seed, default_grid, grid_search, predict_ensemble,
                      prepare_features, train_bagged)
from .partition import PartitionedModel, train_partitioned
from .metrics import ClsMetrics, RegMetrics, cls_metrics, reg_metrics
from .uncertainty import UncertaintyRecord, uncertainty

__all__ = [
    "GbtModel", "GbtParams", "train_gbt",
    "BaggedConfig", "BaggedEnsemble", "SplitPlan", "bootstrap_sample",
    "derive_seed", "default_grid", "grid_search", "predict_ensemble",
    "prepare_features", "train_bagged",
    "PartitionedModel", "train_partitioned",
    "ClsMetrics", "RegMetrics", "cls_metrics", "reg_metrics",
    "UncertaintyRecord", "uncertainty",
]
