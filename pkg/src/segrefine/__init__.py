"""Segmentation refinement with optimized prompt points."""

from .adamw import AdamWState, OptimizerConfig, adamw_step
from .bridge_client import BridgeSegmentor
from .errors import (
    BridgeTransportError,
    DimensionMismatchError,
    NoForegroundError,
    NonFiniteGradientError,
    PhantomGeometryError,
)
from .kmedoids import ClusteringResult, kmedoids, select_positive_points
from .masks import (
    BinaryMask,
    Image,
    SoftMask,
    bce_loss,
    dice,
    double_threshold,
    mask_subtract,
)
from .phantom import (
    DegradeConfig,
    PhantomConfig,
    degrade_mask,
    generate_phantom,
    severity_for_regime,
    write_dataset,
)
from .pipeline import (
    MultiInitResult,
    RefinementConfig,
    RunRow,
    evaluate_multi_init,
    make_segmentor,
    refine_segmentation,
    run_sweep,
)
from .points import PromptPoint, PromptSet, flip_polarity
from .refine import (
    RefineTrace,
    init_complementary,
    random_negative_points,
    refine_negative_points,
)
from .segmentor import (
    AnalyticOracle,
    OracleParams,
    PromptableSegmentor,
    coord_gradient,
    fd_coord_gradient,
)

__version__ = "0.1.0"

__all__ = [
    "AdamWState",
    "AnalyticOracle",
    "BinaryMask",
    "BridgeSegmentor",
    "BridgeTransportError",
    "ClusteringResult",
    "DegradeConfig",
    "DimensionMismatchError",
    "Image",
    "MultiInitResult",
    "NoForegroundError",
    "NonFiniteGradientError",
    "OptimizerConfig",
    "OracleParams",
    "PhantomConfig",
    "PhantomGeometryError",
    "PromptPoint",
    "PromptSet",
    "PromptableSegmentor",
    "RefineTrace",
    "RefinementConfig",
    "RunRow",
    "SoftMask",
    "adamw_step",
    "bce_loss",
    "coord_gradient",
    "degrade_mask",
    "dice",
    "double_threshold",
    "evaluate_multi_init",
    "fd_coord_gradient",
    "flip_polarity",
    "generate_phantom",
    "init_complementary",
    "kmedoids",
    "make_segmentor",
    "mask_subtract",
    "random_negative_points",
    "refine_negative_points",
    "refine_segmentation",
    "run_sweep",
    "select_positive_points",
    "severity_for_regime",
    "write_dataset",
]
