"""Regional strain-gradient analysis of color-coded strain elastograms."""
from .calibration import ColorbarROI, Orientation, extract_color_scale, invert_color, invert_colors
from .config import RunConfig, StatsParams
from .gradients import GradientParams, aggregate, gradient_field
from .model import (
    AnteriorAt,
    ColorScale,
    ElastogramFrame,
    FrameMeta,
    GradientField,
    Group,
    GroupComparison,
    Metric,
    QSMap,
    Region,
    RSMap,
    Site,
    StrainmapError,
)
from .pipeline import FrameResult, analyze_frame, load_frame, suggest_frames
from .quantify import QuantifyParams, column_reference, compute_qs, compute_rs
from .segmentation import SegmentationParams, remove_bone, segment
from .stats import cohort_analysis, group_compare

__version__ = "0.1.0"
