"""plenhance: densify sparse 3D pseudo-labels from 2D segmentation masks.

Points are projected into per-image masks, each mask votes a filtered class
label, and that label is propagated through 3D space while excluding
misprojected outliers.
"""

__version__ = "0.1.0"

from .types import (  # noqa: F401
    IGNORE,
    CameraModel,
    EnhancementConfig,
    LabelVector,
    Mask,
    MaskSet,
    PointCloud,
    Scene,
    validate_scene,
)
from .pipeline import EnhancementReport, enhance_batch, enhance_scene  # noqa: F401
from .eval_metrics import LabelStats, compute_increment, compute_stats  # noqa: F401
