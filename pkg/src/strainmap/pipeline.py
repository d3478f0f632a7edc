"""Per-frame composition of calibration, segmentation, quantification and gradients."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from .calibration import extract_color_scale
from .config import RunConfig
from .gradients import aggregate, gradient_field
from .model import (
    ColorScale,
    ElastogramFrame,
    FrameMeta,
    GradientField,
    InvalidFrame,
    QSMap,
    Region,
    RSMap,
    SegmentationFailed,
    StrainmapError,
    oriented_totals,
)
from .quantify import column_reference, compute_qs, compute_rs
from .segmentation import NO_LINE, remove_bone, segment

log = logging.getLogger(__name__)

COLORBAR_PAD = 2


class FrameError(StrainmapError):
    """A stage failed on a specific frame; ``cause`` holds the original error."""

    def __init__(self, path, cause: Exception):
        self.path = str(path) if path is not None else None
        self.cause = cause
        where = f"{self.path}: " if self.path else ""
        super().__init__(f"{where}{type(cause).__name__}: {cause}")

    @property
    def kind(self) -> str:
        return type(self.cause).__name__


@dataclass(frozen=True)
class FrameMetrics:
    """Reported totals, already mapped to the configured anatomical axes."""

    total_gx: float
    total_gy: float
    total_gr: float


@dataclass(frozen=True)
class FrameResult:
    qs: QSMap
    rs: RSMap
    field: GradientField
    scale: ColorScale
    skin_line: np.ndarray
    metrics: FrameMetrics

    @property
    def n_valid_pixels(self) -> int:
        return self.rs.n_valid

    @property
    def column_exclusion_count(self) -> int:
        """Overlay columns that had a skin line but no usable standoff reference."""
        has_line = self.skin_line != NO_LINE
        return int((has_line & (self.rs.column_reference <= 0)).sum())

    @property
    def total_gx(self) -> float:
        return self.metrics.total_gx

    @property
    def total_gy(self) -> float:
        return self.metrics.total_gy

    @property
    def total_gr(self) -> float:
        return self.metrics.total_gr


def load_frame(path, bmode_path=None, meta: Optional[FrameMeta] = None) -> ElastogramFrame:
    """Read a PNG/BMP still (and optional grayscale B-mode still)."""
    try:
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("RGB"))
        bmode = None
        if bmode_path:
            with Image.open(bmode_path) as img:
                bmode = np.asarray(img.convert("L"))
    except (OSError, ValueError) as exc:
        raise InvalidFrame(f"cannot decode image: {exc}") from exc
    return ElastogramFrame(pixels=pixels, bmode=bmode, meta=meta)


def save_frame(frame: ElastogramFrame, path, bmode_path=None) -> None:
    Image.fromarray(frame.pixels, "RGB").save(path)
    if bmode_path is not None and frame.bmode is not None:
        Image.fromarray(frame.bmode, "L").save(bmode_path)


def _exclusion(frame: ElastogramFrame, config: RunConfig) -> tuple[slice, slice]:
    roi = config.require_colorbar()
    return (
        slice(max(roi.y - COLORBAR_PAD, 0), min(roi.y + roi.height + COLORBAR_PAD, frame.height)),
        slice(max(roi.x - COLORBAR_PAD, 0), min(roi.x + roi.width + COLORBAR_PAD, frame.width)),
    )


def analyze_frame(
    frame: ElastogramFrame,
    config: RunConfig,
    scale: Optional[ColorScale] = None,
    path=None,
) -> FrameResult:
    """Calibrate, segment, quantify and differentiate one frame.

    Any stage error is re-raised as :class:`FrameError` carrying ``path``.
    """
    try:
        roi = config.require_colorbar()
        if scale is None:
            scale = extract_color_scale(frame, roi, config.max_match_distance)
        _, skin, labels = segment(frame, config.segmentation, exclude=_exclusion(frame, config))
        qs = remove_bone(compute_qs(frame, labels, scale), config.segmentation)
        rs = compute_rs(qs, column_reference(qs, config.quantify))
        g = config.gradients
        field = aggregate(gradient_field(rs, g.spacing_x, g.spacing_y), g.agg_min_count)
    except StrainmapError as exc:
        raise FrameError(path, exc) from exc
    metrics = FrameMetrics(*oriented_totals(field.total_gx, field.total_gy, field.total_gr, config.conventions))
    return FrameResult(qs=qs, rs=rs, field=field, scale=scale, skin_line=skin, metrics=metrics)


def standoff_thickness(frame: ElastogramFrame, config: RunConfig) -> float:
    """Mean standoff height (rows) over columns that contain standoff."""
    try:
        _, _, labels = segment(frame, config.segmentation, exclude=_exclusion(frame, config))
    except StrainmapError as exc:
        raise SegmentationFailed(str(exc)) from exc
    counts = (labels == Region.Standoff).sum(axis=0)
    counts = counts[counts > 0]
    if counts.size == 0:
        raise SegmentationFailed("no standoff found")
    return float(counts.mean())


def suggest_frames(frames: Sequence[ElastogramFrame], k: int, config: RunConfig) -> list[int]:
    """Pick ``k`` frames of maximal compression, spread over the sequence.

    The sequence is cut into ``k`` consecutive segments and each contributes
    its frame with the thinnest standoff; ties go to the frame nearest the
    segment's anchor (first / evenly spaced / last frame). Frames that fail
    segmentation are skipped. Advisory only.
    """
    n = len(frames)
    if k < 1 or n < k:
        raise ValueError(f"cannot pick {k} frames out of {n}")
    thickness = np.full(n, math.inf)
    for i, frame in enumerate(frames):
        try:
            thickness[i] = standoff_thickness(frame, config)
        except SegmentationFailed as exc:
            log.warning("frame %d skipped from ranking: %s", i, exc)

    anchors = np.rint(np.linspace(0, n - 1, k)) if k > 1 else np.array([0.0])
    picks = []
    for seg, anchor in zip(np.array_split(np.arange(n), k), anchors):
        usable = [i for i in seg if math.isfinite(thickness[i])]
        if usable:
            picks.append(min(usable, key=lambda i: (thickness[i], abs(i - anchor), i)))

    if len(picks) < k:
        rest = [i for i in np.argsort(thickness, kind="stable") if i not in picks and math.isfinite(thickness[i])]
        picks.extend(rest[: k - len(picks)])
    return sorted(int(i) for i in picks)

