"""Synthetic elastograms with exact ground truth.

A scene is a standoff band, a gray skin-gap line, layered tissue (optionally
with linear strainability ramps) and an optional bone ellipse, all seen
through a per-column load profile that multiplies standoff and tissue
strainability alike. Ground-truth RS is tissue over standoff strainability,
so the load cancels by construction.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .calibration import ColorbarROI, Orientation
from .model import (
    QS_LEVELS,
    ClippingRejected,
    DegenerateScene,
    ElastogramFrame,
    FrameMeta,
    Group,
    Region,
    Site,
)

GROUND_TRUTH_FORMAT = "strainmap-groundtruth"
GROUND_TRUTH_VERSION = 1

# dark blue -> blue -> cyan -> yellow -> red -> dark red, i.e. the jet corners
_RAINBOW_VERTICES = np.array(
    [(0, 0, 128), (0, 0, 255), (0, 255, 255), (255, 255, 0), (255, 0, 0), (128, 0, 0)],
    dtype=np.float64,
)


def rainbow_colormap() -> np.ndarray:
    """(100, 3) uint8 jet-style map; row k is the color of QS k + 1.

    Entries are equally spaced by arc length along the polyline through the
    jet corner colors, so the map is injective with ~11 RGB units between
    neighbours (red = 1 = stiff, dark blue = 100 = soft).
    """
    seg = np.linalg.norm(np.diff(_RAINBOW_VERTICES, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    pos = np.linspace(arc[-1], 0.0, QS_LEVELS)
    rgb = np.stack([np.interp(pos, arc, _RAINBOW_VERTICES[:, i]) for i in range(3)], axis=1)
    return np.rint(rgb).astype(np.uint8)


def render_colorbar(
    colormap: np.ndarray,
    height: int,
    width: int,
    orientation: Orientation = Orientation.SoftAtTop,
) -> np.ndarray:
    """(height, width, 3) bar; levels spread linearly along the rows."""
    rows = np.arange(height)
    soft_rank = (rows * QS_LEVELS) // height  # 0 = softest
    levels = QS_LEVELS - soft_rank
    if Orientation(orientation) is Orientation.StiffAtTop:
        levels = levels[::-1]
    bar = np.asarray(colormap)[levels - 1]
    return np.repeat(bar[:, None, :], width, axis=1).astype(np.uint8)


@dataclass(frozen=True)
class LoadProfile:
    """Per-column strain multiplier. ``Parabolic`` peaks at 1 mid-image and
    falls to ``edge_factor`` at both edges."""

    kind: str = "Uniform"
    edge_factor: float = 1.0

    def __post_init__(self):
        if self.kind not in ("Uniform", "Parabolic"):
            raise ValueError(f"unknown load profile {self.kind!r}")
        if self.edge_factor <= 0:
            raise ValueError("edge_factor must be positive")

    @classmethod
    def parabolic(cls, edge_factor: float) -> "LoadProfile":
        return cls("Parabolic", edge_factor)

    def __call__(self, n: int) -> np.ndarray:
        if self.kind == "Uniform" or n == 1:
            return np.ones(n)
        u = np.linspace(-1.0, 1.0, n)
        return self.edge_factor + (1.0 - self.edge_factor) * (1.0 - u ** 2)


@dataclass(frozen=True)
class Ellipse:
    center_row: float
    center_col: float
    semi_rows: float
    semi_cols: float

    def mask(self, height: int, width: int) -> np.ndarray:
        r = (np.arange(height)[:, None] - self.center_row) / self.semi_rows
        c = (np.arange(width)[None, :] - self.center_col) / self.semi_cols
        return r ** 2 + c ** 2 <= 1.0


@dataclass(frozen=True)
class TissueLayer:
    start: float
    stop: float
    strainability: float


@dataclass(frozen=True)
class PhantomScene:
    width: int = 640
    height: int = 480
    standoff_thickness: int = 60
    skin_gap_thickness: int = 4
    standoff_strainability: float = 60.0
    tissue_layers: tuple[TissueLayer, ...] = (TissueLayer(0.0, 1.0, 60.0),)
    # strainability change per pixel, centred on the tissue block
    tissue_slope_x: float = 0.0
    tissue_slope_y: float = 0.0
    bone: Optional[Ellipse] = None
    bone_style: str = "stiff"
    load_profile: LoadProfile = LoadProfile()
    color_noise_sigma: float = 0.0
    colormap: Optional[np.ndarray] = field(default=None, compare=False, repr=False)
    seed: int = 0
    top_offset: int = 0
    bar_margin: int = 24
    bar_orientation: Orientation = Orientation.SoftAtTop
    emit_bmode: bool = True
    allow_clipping: bool = False

    def __post_init__(self):
        layers = tuple(l if isinstance(l, TissueLayer) else TissueLayer(*l) for l in self.tissue_layers)
        object.__setattr__(self, "tissue_layers", layers)
        if isinstance(self.bone, (tuple, list)):
            object.__setattr__(self, "bone", Ellipse(*self.bone))
        if isinstance(self.load_profile, dict):
            object.__setattr__(self, "load_profile", LoadProfile(**self.load_profile))
        object.__setattr__(self, "bar_orientation", Orientation(self.bar_orientation))
        if self.bone_style not in ("stiff", "gray"):
            raise ValueError("bone_style must be 'stiff' or 'gray'")

        if min(self.standoff_thickness, self.skin_gap_thickness) <= 0:
            raise DegenerateScene("standoff and skin gap need positive thickness")
        if self.tissue_rows < 2:
            raise DegenerateScene("scene leaves no room for tissue")
        if self.overlay_width < 2:
            raise DegenerateScene("colorbar margin leaves no room for the overlay")
        if not layers:
            raise DegenerateScene("at least one tissue layer is required")
        bounds = sorted((l.start, l.stop) for l in layers)
        if bounds[0][0] != 0.0 or bounds[-1][1] != 1.0 or any(
            b[1] != n[0] for b, n in zip(bounds, bounds[1:])
        ) or any(lo >= hi for lo, hi in bounds):
            raise DegenerateScene("tissue layers must partition [0, 1] without overlap")

    @property
    def tissue_top(self) -> int:
        return self.top_offset + self.standoff_thickness + self.skin_gap_thickness

    @property
    def tissue_rows(self) -> int:
        return self.height - self.tissue_top

    @property
    def overlay_width(self) -> int:
        return self.width - self.bar_margin

    def colorbar_roi(self) -> ColorbarROI:
        bar_w = max(3, min(8, self.bar_margin - 4))
        avail = self.height - 8
        bar_h = (avail // QS_LEVELS) * QS_LEVELS if avail >= QS_LEVELS else avail
        bar_h = min(bar_h, 2 * QS_LEVELS)
        x = self.overlay_width + (self.bar_margin - bar_w) // 2
        return ColorbarROI(x, 4, bar_w, bar_h, self.bar_orientation)

    def layer_boundary_rows(self) -> list[int]:
        """Row indices at which a new tissue layer starts (excluding the first)."""
        out = []
        for layer in sorted(self.tissue_layers, key=lambda l: l.start)[1:]:
            out.append(self.tissue_top + int(np.ceil(layer.start * self.tissue_rows)))
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("colormap")
        d["bar_orientation"] = self.bar_orientation.value
        d["tissue_layers"] = [list(asdict(l).values()) for l in self.tissue_layers]
        d["bone"] = list(asdict(self.bone).values()) if self.bone else None
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "PhantomScene":
        known = set(cls.__dataclass_fields__) - {"colormap"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scene keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class GroundTruth:
    strainability: np.ndarray
    qs: np.ndarray
    labels: np.ndarray
    overlay_mask: np.ndarray
    rs: np.ndarray
    skin_line: np.ndarray
    column_load: np.ndarray
    colorbar_roi: ColorbarROI
    scene: dict

    ARRAYS = ("strainability", "qs", "labels", "overlay_mask", "rs", "skin_line", "column_load")

    def save(self, directory) -> Path:
        """Write each array as ``<name>.npy`` plus a ``manifest.json`` sidecar."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        arrays = {}
        for name in self.ARRAYS:
            arr = np.ascontiguousarray(getattr(self, name))
            np.save(directory / f"{name}.npy", arr, allow_pickle=False)
            arrays[name] = {"file": f"{name}.npy", "dtype": arr.dtype.str, "shape": list(arr.shape)}
        roi = asdict(self.colorbar_roi)
        roi["orientation"] = self.colorbar_roi.orientation.value
        manifest = {
            "format": GROUND_TRUTH_FORMAT,
            "version": GROUND_TRUTH_VERSION,
            "layout": "row-major, origin top-left, rows grow toward bone",
            "region_codes": {r.name: int(r) for r in Region},
            "arrays": arrays,
            "colorbar_roi": roi,
            "scene": self.scene,
        }
        path = directory / "manifest.json"
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
        return path

    @classmethod
    def load(cls, directory) -> "GroundTruth":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        if manifest.get("format") != GROUND_TRUTH_FORMAT:
            raise ValueError(f"{directory} is not a ground-truth bundle")
        arrays = {
            name: np.load(directory / spec["file"], allow_pickle=False)
            for name, spec in manifest["arrays"].items()
        }
        return cls(colorbar_roi=ColorbarROI(**manifest["colorbar_roi"]), scene=manifest["scene"], **arrays)


def render(scene: PhantomScene) -> tuple[ElastogramFrame, GroundTruth]:
    rng = np.random.default_rng(scene.seed)
    cmap = rainbow_colormap() if scene.colormap is None else np.asarray(scene.colormap, dtype=np.uint8)
    if cmap.shape != (QS_LEVELS, 3):
        raise ValueError("colormap must have 100 RGB rows")
    H, W, ow = scene.height, scene.width, scene.overlay_width
    rows = np.arange(H)[:, None]
    cols = np.arange(W)[None, :]

    s0 = scene.top_offset
    s1 = s0 + scene.standoff_thickness
    t0 = scene.tissue_top
    in_overlay = cols < ow
    standoff = in_overlay & (rows >= s0) & (rows < s1)
    gap = in_overlay & (rows >= s1) & (rows < t0)
    tissue = in_overlay & (rows >= t0)

    bone = np.zeros((H, W), bool)
    if scene.bone is not None:
        bone = scene.bone.mask(H, W) & tissue
        if not bone.any():
            raise DegenerateScene("bone ellipse does not intersect the tissue")
        tissue = tissue & ~bone

    # unloaded tissue strainability
    depth = (np.arange(H) - t0) / scene.tissue_rows
    layer_value = np.full(H, np.nan)
    for layer in scene.tissue_layers:
        sel = (depth >= layer.start) & (depth < layer.stop)
        if layer.stop == 1.0:
            sel |= depth >= 1.0
        layer_value[sel] = layer.strainability
    row_c = t0 + (scene.tissue_rows - 1) / 2.0
    col_c = (ow - 1) / 2.0
    base = (
        layer_value[:, None]
        + scene.tissue_slope_y * (rows - row_c)
        + scene.tissue_slope_x * (cols - col_c)
    )

    load = np.zeros(W)
    load[:ow] = scene.load_profile(ow)
    strain = np.full((H, W), np.nan)
    strain[standoff] = (scene.standoff_strainability * np.broadcast_to(load, (H, W)))[standoff]
    strain[tissue] = (base * load[None, :])[tissue]

    rendered = standoff | tissue
    if np.any(base[tissue] <= 0):
        raise ClippingRejected("tissue strainability must stay positive")
    levels = np.rint(strain[rendered])
    if (levels.min() < 1 or levels.max() > QS_LEVELS) and not scene.allow_clipping:
        raise ClippingRejected(
            f"rendered QS spans {levels.min():.0f}..{levels.max():.0f}, outside 1..{QS_LEVELS}"
        )
    qs = np.zeros((H, W), dtype=np.int16)
    qs[rendered] = np.clip(levels, 1, QS_LEVELS)

    labels = np.full((H, W), Region.NoData, dtype=np.uint8)
    labels[standoff] = Region.Standoff
    labels[gap] = Region.SkinGap
    labels[tissue] = Region.Tissue
    labels[bone] = Region.Bone

    overlay = rendered.copy()
    if scene.bone_style == "stiff":
        qs[bone] = 1
        overlay |= bone

    bmode = rng.integers(20, 110, size=(H, W)).astype(np.uint8)
    rgb = np.repeat(bmode[..., None], 3, axis=2)
    rgb[overlay] = cmap[qs[overlay] - 1]

    roi = scene.colorbar_roi()
    rs_, cs_ = roi.slices()
    rgb[rs_, cs_] = render_colorbar(cmap, roi.height, roi.width, roi.orientation)
    overlay[rs_, cs_] = True

    if scene.color_noise_sigma > 0:
        noisy = rgb + rng.normal(0.0, scene.color_noise_sigma, size=rgb.shape)
        rgb = np.clip(np.rint(noisy), 0, 255).astype(np.uint8)

    rs = np.full((H, W), np.nan)
    rs[tissue] = (base / scene.standoff_strainability)[tissue]
    skin_line = np.where(np.arange(W) < ow, s1, -1)

    frame = ElastogramFrame(pixels=rgb, bmode=bmode if scene.emit_bmode else None)
    truth = GroundTruth(
        strainability=strain,
        qs=qs,
        labels=labels,
        overlay_mask=overlay,
        rs=rs,
        skin_line=skin_line,
        column_load=load,
        colorbar_roi=roi,
        scene=scene.to_dict(),
    )
    return frame, truth


# --- cohorts ---------------------------------------------------------------


@dataclass(frozen=True)
class CohortRecipe:
    """How to draw a labelled synthetic cohort.

    ``effects`` maps group -> site -> {"gx": mean, "gy": mean}; gradients are
    RS per unit of ``spacing_x``/``spacing_y`` (mm per pixel by default).
    Each subject gets a random offset per site (``subject_sd``) and every
    frame adds independent noise (``frame_sd``).
    """

    n_subjects: dict = field(default_factory=lambda: {"NonUlcerated": 30, "Ulcerated": 9})
    frames_per_site: int = 3
    sites: tuple = tuple(s.value for s in Site)
    effects: dict = field(default_factory=dict)
    subject_sd: tuple = (0.005, 0.006)
    frame_sd: tuple = (0.02, 0.04)
    spacing_x: float = 0.05
    spacing_y: float = 0.05
    width: int = 160
    height: int = 160
    standoff_thickness: int = 20
    skin_gap_thickness: int = 4
    standoff_strainability: float = 26.0
    tissue_rs_center: float = 1.9
    load_edge_range: tuple = (0.6, 1.0)
    color_noise_sigma: float = 2.0
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict) -> "CohortRecipe":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown recipe keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("sites", "subject_sd", "frame_sd", "load_edge_range"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("sites", "subject_sd", "frame_sd", "load_edge_range"):
            d[key] = list(d[key])
        return d

    def mean_gradient(self, group: Group, site: Site) -> tuple[float, float]:
        e = self.effects.get(group.value, {}).get(site.value, {})
        return float(e.get("gx", 0.0)), float(e.get("gy", 0.0))


@dataclass(frozen=True)
class CohortFrameSpec:
    meta: FrameMeta
    target_gx: float
    target_gy: float
    edge_factor: float
    seed: int


def cohort_frame_specs(recipe: CohortRecipe) -> list[CohortFrameSpec]:
    """Per-frame latent targets; fully determined by ``recipe.seed``."""
    rng = np.random.default_rng(recipe.seed)
    specs = []
    for group in (Group.NonUlcerated, Group.Ulcerated):
        prefix = "NU" if group is Group.NonUlcerated else "U"
        for i in range(int(recipe.n_subjects.get(group.value, 0))):
            subject = f"{prefix}{i + 1:03d}"
            for site in map(Site, recipe.sites):
                mx, my = recipe.mean_gradient(group, site)
                sx = rng.normal(0.0, recipe.subject_sd[0])
                sy = rng.normal(0.0, recipe.subject_sd[1])
                for k in range(recipe.frames_per_site):
                    specs.append(
                        CohortFrameSpec(
                            meta=FrameMeta(subject, site, group, k),
                            target_gx=mx + sx + rng.normal(0.0, recipe.frame_sd[0]),
                            target_gy=my + sy + rng.normal(0.0, recipe.frame_sd[1]),
                            edge_factor=float(rng.uniform(*recipe.load_edge_range)),
                            seed=int(rng.integers(0, 2 ** 31)),
                        )
                    )
    return specs


def cohort_scene(recipe: CohortRecipe, spec: CohortFrameSpec) -> PhantomScene:
    s = recipe.standoff_strainability
    return PhantomScene(
        width=recipe.width,
        height=recipe.height,
        standoff_thickness=recipe.standoff_thickness,
        skin_gap_thickness=recipe.skin_gap_thickness,
        standoff_strainability=s,
        tissue_layers=(TissueLayer(0.0, 1.0, recipe.tissue_rs_center * s),),
        tissue_slope_x=spec.target_gx * recipe.spacing_x * s,
        tissue_slope_y=spec.target_gy * recipe.spacing_y * s,
        load_profile=LoadProfile.parabolic(spec.edge_factor),
        color_noise_sigma=recipe.color_noise_sigma,
        seed=spec.seed,
    )


def synth_cohort(recipe: CohortRecipe) -> list[tuple[FrameMeta, ElastogramFrame]]:
    out = []
    for spec in cohort_frame_specs(recipe):
        frame, _ = render(cohort_scene(recipe, spec))
        out.append((spec.meta, ElastogramFrame(frame.pixels, frame.bmode, spec.meta)))
    return out
