"""partlift: lift multi-view 2D part detections into 3D part segmentation.

A detector-agnostic engine: render a colored point cloud from surrounding
views, oversegment it into superpoints, vote per-view 2D boxes into
superpoint semantics, group superpoints into part instances by box-coverage
agreement, and score the result with category mIoU / mAP50.
"""

__version__ = "0.1.0"

from partlift.core import (
    NO_INSTANCE,
    BBox2D,
    Detection,
    LabelSchema,
    Partition,
    PointCloud,
    SegmentationResult,
    ValidationReport,
    View,
    VisibilityMap,
    validate,
)
from partlift.pipeline import PipelineConfig, run_pipeline

__all__ = [
    "NO_INSTANCE",
    "BBox2D",
    "Detection",
    "LabelSchema",
    "Partition",
    "PipelineConfig",
    "PointCloud",
    "SegmentationResult",
    "ValidationReport",
    "View",
    "VisibilityMap",
    "run_pipeline",
    "validate",
    "__version__",
]
