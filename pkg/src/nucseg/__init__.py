"""Nuclei instance segmentation toolkit.

Deterministic building blocks around a nuclei segmentation/classification
pipeline: training-target generation from instance masks, marker-controlled
watershed post-processing of network outputs, panoptic-quality and count
regression evaluation, a cost-sensitive classification loss, per-instance
mask jitter for pseudo ground truth, and Beer-Lambert stain normalization.
"""

from .augment import JitterParams, generate_pseudo_dataset, jitter_instances
from .costloss import (
    build_cost_matrix,
    class_weights,
    cost_sensitive_loss,
    cost_weighted_cross_entropy,
    cost_weighted_cross_entropy_gradient,
    loss_gradient,
    with_background,
)
from .errors import (
    ConfigError,
    InvalidClassError,
    MarkerOutsideMaskError,
    NucsegError,
    PairConsistencyError,
    ShapeMismatchError,
    StainEstimationError,
)
from .instances import (
    CLASS_NAMES,
    N_CLASSES,
    REPORT_ORDER,
    InstanceRecord,
    canonicalize,
    extract_instances,
    validate_pair,
)
from .metrics import (
    MatchResult,
    MetricsReport,
    counts_from,
    evaluate_dataset,
    match_instances,
    mpq_plus,
    pq,
    pq_from_stats,
    r_squared,
)
from .postprocess import (
    PostprocessParams,
    ProbabilityMaps,
    classify_instances,
    extract_markers,
    hover_energy,
    postprocess,
    watershed,
)
from .stain import (
    StainProfile,
    estimate_stain_profile,
    normalize_to_template,
    od_to_rgb,
    rgb_to_od,
)
from .targets import HoVerMaps, compute_hover_maps, compute_np_target

__version__ = "0.1.0"

__all__ = [
    "CLASS_NAMES",
    "ConfigError",
    "HoVerMaps",
    "InstanceRecord",
    "InvalidClassError",
    "JitterParams",
    "MarkerOutsideMaskError",
    "MatchResult",
    "MetricsReport",
    "N_CLASSES",
    "NucsegError",
    "PairConsistencyError",
    "PostprocessParams",
    "ProbabilityMaps",
    "REPORT_ORDER",
    "ShapeMismatchError",
    "StainEstimationError",
    "StainProfile",
    "build_cost_matrix",
    "canonicalize",
    "class_weights",
    "classify_instances",
    "compute_hover_maps",
    "compute_np_target",
    "cost_sensitive_loss",
    "cost_weighted_cross_entropy",
    "cost_weighted_cross_entropy_gradient",
    "counts_from",
    "estimate_stain_profile",
    "evaluate_dataset",
    "extract_instances",
    "extract_markers",
    "generate_pseudo_dataset",
    "hover_energy",
    "jitter_instances",
    "loss_gradient",
    "match_instances",
    "mpq_plus",
    "normalize_to_template",
    "od_to_rgb",
    "postprocess",
    "pq",
    "pq_from_stats",
    "r_squared",
    "rgb_to_od",
    "validate_pair",
    "watershed",
    "with_background",
]
