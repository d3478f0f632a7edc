"""Shared domain types, error classes and frame coordinate conventions.

Rasters are numpy arrays addressed ``[row, col]`` with the origin at the
top-left. Row index grows from the probe/standoff toward bone, column index
grows left to right.

QS polarity: QS grows with strainability (softness). The deep-blue end of
the display colorbar is 100, the red end is 1, 0 means "no data".
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

MIN_FRAME_SIZE = 64
QS_LEVELS = 100


class StrainmapError(Exception):
    """Base class for all pipeline errors."""


class InvalidFrame(StrainmapError):
    pass


class RoiOutOfBounds(StrainmapError):
    pass


class DegenerateColorbar(StrainmapError):
    pass


class NoSkinLineFound(StrainmapError):
    pass


class NoStandoffFound(StrainmapError):
    pass


class EmptyField(StrainmapError):
    pass


class NoAggregableData(StrainmapError):
    pass


class InsufficientData(StrainmapError):
    pass


class ClippingRejected(StrainmapError):
    pass


class DegenerateScene(StrainmapError):
    pass


class SegmentationFailed(StrainmapError):
    pass


class ConfigError(StrainmapError):
    pass


class EmptyManifest(StrainmapError):
    pass


class AllFramesFailed(StrainmapError):
    pass


class Site(str, enum.Enum):
    LeftForefoot = "LeftForefoot"
    LeftHeel = "LeftHeel"
    RightForefoot = "RightForefoot"
    RightHeel = "RightHeel"


class Group(str, enum.Enum):
    Ulcerated = "Ulcerated"
    NonUlcerated = "NonUlcerated"


class Metric(str, enum.Enum):
    TotalGx = "TotalGx"
    TotalGy = "TotalGy"
    TotalGr = "TotalGr"


class Region(enum.IntEnum):
    NoData = 0
    Standoff = 1
    SkinGap = 2
    Tissue = 3
    Bone = 4


class AnteriorAt(str, enum.Enum):
    ImageLeft = "ImageLeft"
    ImageRight = "ImageRight"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.flags.writeable:
        arr = arr.copy()
        arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FrameMeta:
    subject_id: str
    site: Site
    group: Group
    frame_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "site", Site(self.site))
        object.__setattr__(self, "group", Group(self.group))
        if self.frame_index < 0:
            raise ValueError("frame_index must be non-negative")


@dataclass(frozen=True)
class ElastogramFrame:
    """RGB elastogram raster, shape (H, W, 3) uint8, plus optional B-mode."""

    pixels: np.ndarray
    bmode: Optional[np.ndarray] = None
    meta: Optional[FrameMeta] = None

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise InvalidFrame(f"expected an (H, W, 3) raster, got shape {px.shape}")
        if px.shape[0] < MIN_FRAME_SIZE or px.shape[1] < MIN_FRAME_SIZE:
            raise InvalidFrame(
                f"frame {px.shape[1]}x{px.shape[0]} is below the "
                f"{MIN_FRAME_SIZE}x{MIN_FRAME_SIZE} minimum"
            )
        object.__setattr__(self, "pixels", _frozen(px.astype(np.uint8, copy=False)))
        if self.bmode is not None:
            bm = np.asarray(self.bmode)
            if bm.shape != px.shape[:2]:
                raise InvalidFrame(
                    f"B-mode raster shape {bm.shape} does not match frame {px.shape[:2]}"
                )
            object.__setattr__(self, "bmode", _frozen(bm.astype(np.uint8, copy=False)))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class ColorScale:
    """Lookup from display color to QS.

    ``colors[k]`` is the RGB color of QS level ``k + 1``.
    """

    colors: np.ndarray
    max_match_distance: float = 40.0

    def __post_init__(self):
        colors = np.asarray(self.colors, dtype=np.float64)
        if colors.shape != (QS_LEVELS, 3):
            raise ValueError(f"a color scale needs exactly {QS_LEVELS} RGB entries")
        if len(np.unique(colors, axis=0)) < 2:
            raise DegenerateColorbar("color scale has fewer than 2 distinct colors")
        if self.max_match_distance < 0:
            raise ValueError("max_match_distance must be non-negative")
        object.__setattr__(self, "colors", _frozen(colors))

    @property
    def entries(self) -> list[tuple[int, tuple[float, float, float]]]:
        return [(k + 1, tuple(c)) for k, c in enumerate(self.colors)]


@dataclass(frozen=True)
class QSMap:
    """Integer QS field with region labels.

    ``raw`` keeps the color-inverted QS of every Standoff/Tissue/Bone pixel so
    bone removal can be recomputed from scratch; ``values`` is what downstream
    stages consume (0 on SkinGap, Bone and NoData).
    """

    values: np.ndarray
    labels: np.ndarray
    raw: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values)
        labels = np.asarray(self.labels)
        if values.shape != labels.shape or values.ndim != 2:
            raise ValueError("values and labels must be matching 2-D fields")
        if np.any((values < 0) | (values > QS_LEVELS)):
            raise ValueError("QS values must lie in {0} or [1, 100]")
        zero_regions = np.isin(labels, (Region.SkinGap, Region.NoData, Region.Bone))
        if np.any(values[zero_regions] != 0):
            raise ValueError("SkinGap, Bone and NoData pixels must carry QS 0")
        object.__setattr__(self, "values", _frozen(values.astype(np.int16, copy=False)))
        object.__setattr__(self, "labels", _frozen(labels.astype(np.uint8, copy=False)))
        object.__setattr__(self, "raw", _frozen(np.asarray(self.raw).astype(np.int16, copy=False)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


@dataclass(frozen=True)
class RSMap:
    values: np.ndarray
    valid: np.ndarray
    column_reference: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.shape != valid.shape or values.ndim != 2:
            raise ValueError("values and valid must be matching 2-D fields")
        if np.any(values[valid] <= 0):
            raise ValueError("valid RS values must be positive")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))
        object.__setattr__(
            self, "column_reference", _frozen(np.asarray(self.column_reference, dtype=np.float64))
        )

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())


@dataclass(frozen=True)
class GradientField:
    """Per-pixel gradients (NaN where undefined) and their aggregates.

    Aggregates are NaN until :func:`strainmap.gradients.aggregate` fills them.
    """

    gx: np.ndarray
    gy: np.ndarray
    gr: np.ndarray
    spacing_x: float = 1.0
    spacing_y: float = 1.0
    row_mean_gx: Optional[np.ndarray] = None
    col_mean_gy: Optional[np.ndarray] = None
    total_gx: float = float("nan")
    total_gy: float = float("nan")
    total_gr: float = float("nan")

    def __post_init__(self):
        if self.spacing_x <= 0 or self.spacing_y <= 0:
            raise ValueError("spacings must be positive")
        for name in ("gx", "gy", "gr", "row_mean_gx", "col_mean_gy"):
            value = getattr(self, name)
            if value is not None:
                object.__setattr__(self, name, _frozen(np.asarray(value, dtype=np.float64)))

    @property
    def gx_valid(self) -> np.ndarray:
        return ~np.isnan(self.gx)

    @property
    def gy_valid(self) -> np.ndarray:
        return ~np.isnan(self.gy)

    @property
    def gr_valid(self) -> np.ndarray:
        return ~np.isnan(self.gr)


@dataclass(frozen=True)
class GroupComparison:
    site: Site
    metric: Metric
    n_a: int
    n_b: int
    mean_a: float
    mean_b: float
    ci95_a: float
    ci95_b: float
    t: float
    df: float
    p_two_tailed: float
    eta_squared: float
    welch: bool = False
    degenerate: bool = False
    group_a: Group = Group.NonUlcerated
    group_b: Group = Group.Ulcerated
    error: Optional[str] = None

    @property
    def significant(self) -> bool:
        return self.error is None and self.p_two_tailed < 0.05

    def as_dict(self) -> dict:
        out = {}
        for key, value in self.__dict__.items():
            if isinstance(value, enum.Enum):
                value = value.value
            elif isinstance(value, float) and not np.isfinite(value):
                value = None if np.isnan(value) else ("inf" if value > 0 else "-inf")
            out[key] = value
        out["significant"] = self.significant
        return out


@dataclass(frozen=True)
class Conventions:
    """Fixed axis conventions of every raster in the package."""

    row_direction: str = "probe/standoff (top) -> bone (bottom)"
    column_direction: str = "image left -> image right"
    anterior_at: AnteriorAt = AnteriorAt.ImageLeft
    bone_at: str = "image bottom"
    report_as_stiffness: bool = False
    notes: tuple[str, ...] = field(
        default=(
            "Gradients are evaluated on RS with backward differences along these axes.",
            "A positive anterior-posterior value means RS grows toward posterior.",
            "report_as_stiffness negates gx/gy so signs describe stiffness instead of strainability.",
        )
    )


def coordinate_conventions(
    anterior_at: AnteriorAt | str = AnteriorAt.ImageLeft,
    report_as_stiffness: bool = False,
) -> Conventions:
    return Conventions(anterior_at=AnteriorAt(anterior_at), report_as_stiffness=report_as_stiffness)


def oriented_totals(
    total_gx: float,
    total_gy: float,
    total_gr: float,
    conventions: Conventions,
) -> tuple[float, float, float]:
    """Map image-axis RS totals to (anterior-posterior, superior-inferior, oblique).

    Mirroring the x axis negates every backward difference along it, so a
    flipped probe is a sign change of gx. The oblique total is sign-free.
    """
    gx, gy = total_gx, total_gy
    if conventions.anterior_at is AnteriorAt.ImageRight:
        gx = -gx
    if conventions.report_as_stiffness:
        gx, gy = -gx, -gy
    return gx, gy, total_gr
