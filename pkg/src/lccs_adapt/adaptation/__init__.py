"""Batch-norm adaptation: LCCS, the reparameterization algebra and baselines."""

from .baselines import (
    AdaptStrategy,
    OnlineResult,
    adabn_adapt,
    finetune_bn_params,
    tent_eval,
    testtime_bn_eval,
)
from .heads import build_ncc_head, finetune_classifier
from .lccs import (
    LCCSLayerState,
    adapt_lccs,
    collect_support_stats,
    extract_spanning_vectors,
    freeze,
    gradient_adapt,
    grid_init,
    lccs_stats,
)
from .reparam import BNConfig, params_from_stats, stats_from_params, verify_equivalence

__all__ = [
    "AdaptStrategy",
    "BNConfig",
    "LCCSLayerState",
    "OnlineResult",
    "adabn_adapt",
    "adapt_lccs",
    "build_ncc_head",
    "collect_support_stats",
    "extract_spanning_vectors",
    "finetune_bn_params",
    "finetune_classifier",
    "freeze",
    "gradient_adapt",
    "grid_init",
    "lccs_stats",
    "params_from_stats",
    "stats_from_params",
    "tent_eval",
    "testtime_bn_eval",
    "verify_equivalence",
]
