"""Run configuration: YAML on disk, nested dataclasses in memory.

Every key has a default (see ``RunConfig().to_dict()`` or
``strainmap default-config``); unknown keys are rejected. The colorbar ROI is
the one setting without a usable default, because screen layouts differ
between scanners: analysis refuses to run until it is set.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import yaml

from .calibration import DEFAULT_MAX_MATCH_DISTANCE, ColorbarROI
from .gradients import GradientParams
from .model import AnteriorAt, ConfigError, Conventions, StrainmapError, coordinate_conventions
from .quantify import QuantifyParams
from .segmentation import SegmentationParams

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class StatsParams:
    welch: bool = False
    report_as_stiffness: bool = False


@dataclass(frozen=True)
class RunConfig:
    colorbar: Optional[ColorbarROI] = None
    max_match_distance: float = DEFAULT_MAX_MATCH_DISTANCE
    segmentation: SegmentationParams = field(default_factory=SegmentationParams)
    quantify: QuantifyParams = field(default_factory=QuantifyParams)
    gradients: GradientParams = field(default_factory=GradientParams)
    stats: StatsParams = field(default_factory=StatsParams)
    anterior_at: AnteriorAt = AnteriorAt.ImageLeft
    output_dir: str = "strainmap-out"
    workers: int = 1
    heatmaps: bool = False

    def __post_init__(self):
        object.__setattr__(self, "anterior_at", AnteriorAt(self.anterior_at))
        if not 0 <= self.max_match_distance <= 442:
            raise ConfigError("max_match_distance must be in [0, 442]")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def conventions(self) -> Conventions:
        return coordinate_conventions(self.anterior_at, self.stats.report_as_stiffness)

    def require_colorbar(self) -> ColorbarROI:
        if self.colorbar is None:
            raise ConfigError("colorbar ROI (colorbar.x/y/width/height) is not configured")
        return self.colorbar

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "colorbar": None,
            "max_match_distance": self.max_match_distance,
            "segmentation": asdict(self.segmentation),
            "quantify": asdict(self.quantify),
            "gradients": asdict(self.gradients),
            "stats": asdict(self.stats),
            "anterior_at": self.anterior_at.value,
            "output_dir": self.output_dir,
            "workers": self.workers,
            "heatmaps": self.heatmaps,
        }
        if self.colorbar is not None:
            roi = asdict(self.colorbar)
            roi["orientation"] = self.colorbar.orientation.value
            d["colorbar"] = roi
        return d

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> "RunConfig":
        data = dict(data or {})
        version = data.pop("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema_version {version}")
        _check_keys(data, {f.name for f in fields(cls)}, "config")
        sections = {
            "segmentation": SegmentationParams,
            "quantify": QuantifyParams,
            "gradients": GradientParams,
            "stats": StatsParams,
        }
        kwargs = {}
        try:
            for key, value in data.items():
                if key in sections:
                    section = sections[key]
                    value = value or {}
                    _check_keys(value, {f.name for f in fields(section)}, key)
                    kwargs[key] = section(**value)
                elif key == "colorbar":
                    if value is not None:
                        _check_keys(value, {f.name for f in fields(ColorbarROI)}, key)
                        kwargs[key] = ColorbarROI(**value)
                else:
                    kwargs[key] = value
            return cls(**kwargs)
        except ConfigError:
            raise
        except (TypeError, ValueError, StrainmapError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        text = Path(path).read_text(encoding="utf-8")
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if data is not None and not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        return cls.from_dict(data)

    def dump(self, path) -> Path:
        path = Path(path)
        path.write_text(yaml.safe_dump(self.to_dict(), sort_keys=False), encoding="utf-8")
        return path

    def with_overrides(self, **kwargs) -> "RunConfig":
        return replace(self, **kwargs)


def _check_keys(data: dict, allowed: set, where: str) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a mapping")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
