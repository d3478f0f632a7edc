"""Colorbar extraction and nearest-neighbour color inversion."""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from .model import QS_LEVELS, ColorScale, DegenerateColorbar, ElastogramFrame, RoiOutOfBounds

DEFAULT_MAX_MATCH_DISTANCE = 40.0
_CHUNK = 8192


class Orientation(str, enum.Enum):
    SoftAtTop = "SoftAtTop"
    StiffAtTop = "StiffAtTop"


@dataclass(frozen=True)
class ColorbarROI:
    x: int
    y: int
    width: int
    height: int
    orientation: Orientation = Orientation.SoftAtTop

    def __post_init__(self):
        object.__setattr__(self, "orientation", Orientation(self.orientation))
        if self.x < 0 or self.y < 0:
            raise RoiOutOfBounds("colorbar ROI origin must be non-negative")
        if self.width <= 0 or self.height <= 0:
            raise RoiOutOfBounds("colorbar ROI must have positive size")

    def slices(self) -> tuple[slice, slice]:
        return slice(self.y, self.y + self.height), slice(self.x, self.x + self.width)

    def check_inside(self, height: int, width: int) -> None:
        if self.y + self.height > height or self.x + self.width > width:
            raise RoiOutOfBounds(
                f"colorbar ROI {self.x},{self.y} {self.width}x{self.height} "
                f"exceeds frame {width}x{height}"
            )


def extract_color_scale(
    frame: ElastogramFrame,
    roi: ColorbarROI,
    max_match_distance: float = DEFAULT_MAX_MATCH_DISTANCE,
) -> ColorScale:
    """Build a 100-entry :class:`ColorScale` from the on-screen colorbar.

    Each bar row is reduced to the mean color of the middle third of the ROI
    columns. Levels are assigned linearly along the bar, soft end = 100, and
    each level's color is the mean of the rows falling in its bin.
    """
    roi.check_inside(frame.height, frame.width)
    rows, cols = roi.slices()
    bar = frame.pixels[rows, cols].astype(np.float64)

    third = roi.width // 3
    lo, hi = third, roi.width - third
    if hi <= lo:
        lo, hi = roi.width // 2, roi.width // 2 + 1
    profile = bar[:, lo:hi].mean(axis=1)

    if len(np.unique(np.rint(profile), axis=0)) < 2:
        raise DegenerateColorbar("colorbar ROI contains fewer than 2 distinct colors")

    # soft end first
    if roi.orientation is Orientation.StiffAtTop:
        profile = profile[::-1]

    n = len(profile)
    soft_first = np.empty((QS_LEVELS, 3))
    if n >= QS_LEVELS:
        edges = (np.arange(QS_LEVELS + 1) * n) // QS_LEVELS
        for k in range(QS_LEVELS):
            soft_first[k] = profile[edges[k]:edges[k + 1]].mean(axis=0)
    else:
        warnings.warn(
            f"colorbar ROI is only {n} rows high; some QS levels share a sample row",
            stacklevel=2,
        )
        idx = np.floor((np.arange(QS_LEVELS) + 0.5) * n / QS_LEVELS).astype(int)
        soft_first = profile[idx]

    # colors[k] holds QS level k + 1, so the stiff end comes first
    return ColorScale(colors=soft_first[::-1], max_match_distance=max_match_distance)


def _nearest_levels(scale: ColorScale, points: np.ndarray) -> np.ndarray:
    """QS for each row of ``points`` (N, 3), float64."""
    colors = scale.colors
    limit = scale.max_match_distance ** 2
    out = np.empty(len(points), dtype=np.int16)
    for start in range(0, len(points), _CHUNK):
        chunk = points[start:start + _CHUNK]
        d2 = ((chunk[:, None, :] - colors[None, :, :]) ** 2).sum(axis=2)
        # argmin returns the first minimum, i.e. the lower QS on ties
        idx = d2.argmin(axis=1)
        best = d2[np.arange(len(chunk)), idx]
        levels = (idx + 1).astype(np.int16)
        levels[best > limit] = 0
        out[start:start + _CHUNK] = levels
    return out


def invert_colors(scale: ColorScale, rgb: np.ndarray) -> np.ndarray:
    """Vectorised :func:`invert_color` over an (..., 3) array."""
    rgb = np.asarray(rgb)
    shape = rgb.shape[:-1]
    flat = rgb.reshape(-1, 3)
    if flat.size == 0:
        return np.zeros(shape, dtype=np.int16)
    if rgb.dtype == np.uint8:
        # few distinct colors in practice; invert each once
        keys = (flat[:, 0].astype(np.int32) << 16) | (flat[:, 1].astype(np.int32) << 8) | flat[:, 2]
        uniq, inverse = np.unique(keys, return_inverse=True)
        pts = np.stack([(uniq >> 16) & 255, (uniq >> 8) & 255, uniq & 255], axis=1).astype(np.float64)
        return _nearest_levels(scale, pts)[inverse.ravel()].reshape(shape)
    return _nearest_levels(scale, flat.astype(np.float64)).reshape(shape)


def invert_color(scale: ColorScale, color) -> int:
    """Nearest-entry QS for a single RGB color, 0 if nothing is close enough."""
    pt = np.asarray(color, dtype=np.float64).reshape(1, 3)
    return int(_nearest_levels(scale, pt)[0])
