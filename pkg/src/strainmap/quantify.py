"""QS and standoff-normalised RS maps."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import invert_colors
from .model import ColorScale, ElastogramFrame, NoStandoffFound, QSMap, Region, RSMap


@dataclass(frozen=True)
class QuantifyParams:
    ref_min_pixels: int = 3
    ref_floor: float = 5.0

    def __post_init__(self):
        if self.ref_min_pixels < 1:
            raise ValueError("ref_min_pixels must be >= 1")
        if not 0 <= self.ref_floor <= 100:
            raise ValueError("ref_floor must be in [0, 100]")


def compute_qs(frame: ElastogramFrame, labels: np.ndarray, scale: ColorScale) -> QSMap:
    labels = np.asarray(labels, dtype=np.uint8)
    colored = np.isin(labels, (Region.Standoff, Region.Tissue, Region.Bone))
    raw = np.zeros(labels.shape, dtype=np.int16)
    raw[colored] = invert_colors(scale, frame.pixels[colored])
    values = np.where(np.isin(labels, (Region.Standoff, Region.Tissue)), raw, 0)
    return QSMap(values=values, labels=labels, raw=raw)


def column_reference(qs: QSMap, params: QuantifyParams = QuantifyParams()) -> np.ndarray:
    """Mean nonzero standoff QS per column; 0 for columns that cannot serve as a reference."""
    standoff = (qs.labels == Region.Standoff) & (qs.values > 0)
    counts = standoff.sum(axis=0)
    sums = np.where(standoff, qs.values, 0).sum(axis=0, dtype=np.float64)
    ref = np.divide(sums, counts, out=np.zeros(len(counts)), where=counts > 0)
    ref[(counts < params.ref_min_pixels) | (ref < params.ref_floor)] = 0.0
    if not np.any(ref > 0):
        raise NoStandoffFound("no column has enough standoff data to act as a reference")
    return ref


def compute_rs(qs: QSMap, reference: np.ndarray) -> RSMap:
    """Divide each nonzero tissue QS by the standoff reference of its column."""
    reference = np.asarray(reference, dtype=np.float64)
    valid = (qs.labels == Region.Tissue) & (qs.values > 0) & (reference[None, :] > 0)
    denom = np.broadcast_to(reference, qs.shape)
    rs = np.divide(qs.values, denom, out=np.zeros(qs.shape), where=valid)
    return RSMap(values=rs, valid=valid, column_reference=reference)
