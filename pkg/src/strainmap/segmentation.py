"""Overlay detection, skin-line search, standoff/tissue split and bone removal."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import ndimage

from .model import ElastogramFrame, NoSkinLineFound, QSMap, Region

NO_LINE = -1


@dataclass(frozen=True)
class SegmentationParams:
    saturation_threshold: float = 25.0
    residual_threshold: float = 20.0
    gap_min: int = 3
    min_valid_fraction: float = 0.5
    bone_depth_fraction: float = 0.6
    bone_qs_percentile: float = 10.0
    bone_min_area: int = 25

    def __post_init__(self):
        if not 0 <= self.saturation_threshold <= 255:
            raise ValueError("saturation_threshold must be in [0, 255]")
        if not 0 <= self.residual_threshold <= 255:
            raise ValueError("residual_threshold must be in [0, 255]")
        if self.gap_min < 1:
            raise ValueError("gap_min must be >= 1")
        if not 0 < self.min_valid_fraction <= 1:
            raise ValueError("min_valid_fraction must be in (0, 1]")
        if not 0 <= self.bone_depth_fraction < 1:
            raise ValueError("bone_depth_fraction must be in [0, 1)")
        if not 0 <= self.bone_qs_percentile <= 100:
            raise ValueError("bone_qs_percentile must be in [0, 100]")
        if self.bone_min_area < 1:
            raise ValueError("bone_min_area must be >= 1")


def suppress_bmode(
    frame: ElastogramFrame,
    saturation_threshold: float = 25.0,
    residual_threshold: float = 20.0,
) -> np.ndarray:
    """Boolean (H, W) mask of pixels that carry elastography color.

    With a B-mode raster the residual is the largest per-channel absolute
    difference from it; without one, saturation is max(RGB) - min(RGB).
    """
    px = frame.pixels.astype(np.int16)
    if frame.bmode is not None:
        residual = np.abs(px - frame.bmode.astype(np.int16)[..., None]).max(axis=2)
        return residual > residual_threshold
    saturation = px.max(axis=2) - px.min(axis=2)
    return saturation > saturation_threshold


def _first_gap(column: np.ndarray, gap_min: int) -> tuple[int, int]:
    """(gap start, first marked row below the gap) or (NO_LINE, NO_LINE)."""
    rows = np.flatnonzero(column)
    if len(rows) < 2:
        return NO_LINE, NO_LINE
    runs = np.diff(rows) - 1
    hit = np.flatnonzero(runs >= gap_min)
    if hit.size == 0:
        return NO_LINE, NO_LINE
    k = hit[0]
    return int(rows[k] + 1), int(rows[k + 1])


def find_skin_line(
    color_mask: np.ndarray,
    gap_min: int = 3,
    min_valid_fraction: float = 0.5,
) -> np.ndarray:
    """Per-column row index where the skin gap starts, ``NO_LINE`` where absent.

    The gap is the first run of at least ``gap_min`` unmarked rows below the
    first marked row that has marked rows underneath it again.
    """
    mask = np.asarray(color_mask, dtype=bool)
    width = mask.shape[1]
    line = np.full(width, NO_LINE, dtype=np.int64)
    for c in range(width):
        line[c] = _first_gap(mask[:, c], gap_min)[0]
    needed = int(np.ceil(min_valid_fraction * width))
    found = int((line != NO_LINE).sum())
    if found < needed:
        raise NoSkinLineFound(f"skin line found in {found} columns, need {needed}")
    return line


def split_standoff_tissue(color_mask: np.ndarray, skin_line: np.ndarray) -> np.ndarray:
    """Region labels (uint8) from the color mask and skin line.

    Columns without a skin line stay NoData; so do unmarked pixels that are
    not part of the gap itself.
    """
    mask = np.asarray(color_mask, dtype=bool)
    height, width = mask.shape
    labels = np.full((height, width), Region.NoData, dtype=np.uint8)
    rows = np.arange(height)
    for c in np.flatnonzero(skin_line != NO_LINE):
        start = skin_line[c]
        below = np.flatnonzero(mask[start:, c])
        if below.size == 0:
            continue
        end = start + below[0]
        col = mask[:, c]
        labels[(rows < start) & col, c] = Region.Standoff
        labels[start:end, c] = Region.SkinGap
        labels[(rows >= end) & col, c] = Region.Tissue
    return labels


def _depth_fraction(tissue: np.ndarray) -> np.ndarray:
    """Relative depth in [0, 1] inside each column's tissue span, NaN elsewhere."""
    height, width = tissue.shape
    rows = np.arange(height, dtype=np.float64)[:, None]
    has = tissue.any(axis=0)
    first = np.where(has, tissue.argmax(axis=0), 0)
    last = np.where(has, height - 1 - tissue[::-1].argmax(axis=0), 0)
    span = np.maximum(last - first, 1).astype(np.float64)
    frac = (rows - first[None, :]) / span[None, :]
    inside = has[None, :] & (rows >= first[None, :]) & (rows <= last[None, :])
    return np.where(inside, frac, np.nan)


def _column_percentile(values: np.ndarray, select: np.ndarray, q: float) -> np.ndarray:
    """Per-column percentile (linear interpolation) of ``values[select]``; NaN for empty columns."""
    ordered = np.sort(np.where(select, values, np.inf).astype(np.float64), axis=0)
    n = select.sum(axis=0)
    pos = q / 100.0 * np.maximum(n - 1, 0)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, np.maximum(n - 1, 0))
    cols = np.arange(values.shape[1])
    a, b = ordered[lo, cols], ordered[hi, cols]
    with np.errstate(invalid="ignore"):  # empty columns are inf - inf; masked below
        out = a + (pos - lo) * np.where(hi > lo, b - a, 0.0)
    return np.where(n > 0, out, np.nan)


def remove_bone(qs: QSMap, params: Optional[SegmentationParams] = None) -> QSMap:
    """Relabel deep, stiff tissue as Bone and zero its QS.

    A tissue pixel is a bone candidate when it lies deeper than
    ``bone_depth_fraction`` of its column's tissue span and its QS is strictly
    below the ``bone_qs_percentile`` of the superficial (non-deep) tissue QS
    in the same column. The per-column reference keeps uneven probe load from
    passing for bone.
    Candidates are closed with a 3x3 element and components smaller than
    ``bone_min_area`` revert to Tissue. Existing Bone labels are reset first,
    so the operation is idempotent.
    """
    p = params or SegmentationParams()
    labels = qs.labels.copy()
    labels[labels == Region.Bone] = Region.Tissue
    tissue = labels == Region.Tissue
    values = np.where(tissue | (labels == Region.Standoff), qs.raw, 0)

    depth = _depth_fraction(tissue)
    with np.errstate(invalid="ignore"):
        deep = tissue & (depth > p.bone_depth_fraction)
    shallow = tissue & ~deep & (values > 0)

    bone = np.zeros_like(tissue)
    columns = np.flatnonzero(shallow.any(axis=0) & deep.any(axis=0))
    if columns.size:
        threshold = np.full(values.shape[1], -np.inf)
        threshold[columns] = _column_percentile(values[:, columns], shallow[:, columns], p.bone_qs_percentile)
        candidates = deep & (values > 0) & (values < threshold[None, :])
        if candidates.any():
            closed = candidates | ndimage.binary_closing(candidates, structure=np.ones((3, 3), bool))
            closed &= tissue
            comp, n = ndimage.label(closed, structure=np.ones((3, 3), bool))
            if n:
                sizes = np.bincount(comp.ravel())
                keep = sizes >= p.bone_min_area
                keep[0] = False
                bone = keep[comp]

    labels[bone] = Region.Bone
    values = np.where(bone, 0, values)
    return QSMap(values=values, labels=labels, raw=qs.raw)


def segment(
    frame: ElastogramFrame,
    params: Optional[SegmentationParams] = None,
    exclude: Optional[tuple[slice, slice]] = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run overlay detection, skin line and split. Returns (mask, skin_line, labels).

    ``exclude`` blanks a rectangle (e.g. the colorbar) out of the color mask.
    """
    p = params or SegmentationParams()
    mask = suppress_bmode(frame, p.saturation_threshold, p.residual_threshold)
    if exclude is not None:
        mask[exclude] = False
    skin = find_skin_line(mask, p.gap_min, p.min_valid_fraction)
    return mask, skin, split_standoff_tissue(mask, skin)
