"""Graph-Laplacian and Mahalanobis anomaly detection for image cubes."""

from .cube import ImageCube, Mask, ScoreMap, as_cube
from .detectors import (
    LaplacianAnomalyDetector,
    RXDetector,
    apply_threshold,
    lad_p_score,
    lad_s_score,
    lad_score,
    rxd_p_score,
    rxd_score,
    stack_neighbor_signals,
)
from .errors import LadkitError
from .evaluation import (
    DEFAULT_THRESHOLD_GRID,
    ConfusionCounts,
    EvalReport,
    best_threshold,
    confusion,
    evaluate,
    roc_curve,
    soi,
)
from .graph import (
    GraphModel,
    WeightMatrix,
    build_laplacian,
    cauchy_weights,
    degree_matrix,
    degree_vector,
    eigendecompose,
    partial_correlation_weights,
    spatial_spectral_weights,
)
from .stats import BackgroundStats, center_cube, center_pixel, estimate_background_stats
from .synthetic import ImplantSpec, implant, sample_gmrf_scene, square_line_mask
from .transforms import (
    TruncationPolicy,
    cumulative_energy,
    cumulative_energy_curve,
    gft_transform,
    inverse_gft,
    klt_basis,
    klt_transform,
    select_p,
)

__version__ = "0.1.0"

__all__ = [
    "BackgroundStats",
    "ConfusionCounts",
    "DEFAULT_THRESHOLD_GRID",
    "EvalReport",
    "GraphModel",
    "ImageCube",
    "ImplantSpec",
    "LadkitError",
    "LaplacianAnomalyDetector",
    "Mask",
    "RXDetector",
    "ScoreMap",
    "TruncationPolicy",
    "WeightMatrix",
    "apply_threshold",
    "as_cube",
    "best_threshold",
    "build_laplacian",
    "cauchy_weights",
    "center_cube",
    "center_pixel",
    "confusion",
    "cumulative_energy",
    "cumulative_energy_curve",
    "degree_matrix",
    "degree_vector",
    "eigendecompose",
    "estimate_background_stats",
    "evaluate",
    "gft_transform",
    "implant",
    "inverse_gft",
    "klt_basis",
    "klt_transform",
    "lad_p_score",
    "lad_s_score",
    "lad_score",
    "partial_correlation_weights",
    "roc_curve",
    "rxd_p_score",
    "rxd_score",
    "sample_gmrf_scene",
    "select_p",
    "soi",
    "spatial_spectral_weights",
    "square_line_mask",
    "stack_neighbor_signals",
]
