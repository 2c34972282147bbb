"""JSON configuration models: light layouts, synthetic scenes and pipeline jobs."""

from pathlib import Path
from typing import Literal, Self

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    FilePath,
    PositiveFloat,
    PositiveInt,
    model_validator,
    validate_call,
)

from via_inspector.leveling import LevelingParams
from via_inspector.metrology import ReferenceValue
from via_inspector.photometric_stereo import normalize_lights
from via_inspector.rasters import LightSet
from via_inspector.settings import InspectionSettings
from via_inspector.synthetic import SceneSpec


class LightConfig(BaseModel):
    """
    Light layout as stored in JSON.

    ``kind`` tells whether ``vectors`` are light positions in millimeters
    (normalized on load) or unit illumination directions.
    """

    kind: Literal["positions", "directions"]
    vectors: list[tuple[float, float, float]] = Field(min_length=1)

    model_config = ConfigDict(extra="forbid")

    def to_light_set(self) -> LightSet:
        """Return the unit directions, normalizing positions."""
        if self.kind == "positions":
            return normalize_lights(self.vectors)
        return LightSet(directions=np.asarray(self.vectors, dtype=np.float64))

    @classmethod
    def from_light_set(cls, lights: LightSet) -> Self:
        """Describe a light set by its unit directions."""
        return cls(kind="directions", vectors=[tuple(direction) for direction in lights.directions.tolist()])

    @classmethod
    @validate_call
    def from_json(cls, path: FilePath) -> Self:
        """
        Load and validate a light layout from a JSON file.

        Parameters
        ----------
        path : FilePath
            Path to the JSON file.

        Returns
        -------
        Self
            The validated layout.

        """
        return cls.model_validate_json(path.read_bytes())


@validate_call
def load_scene(path: FilePath) -> SceneSpec:
    """Load a synthetic scene description from JSON."""
    return SceneSpec.model_validate_json(path.read_bytes())


class JobConfig(BaseModel):
    """
    One reconstruct, level, inspect and compare run over a set of frames.

    Relative paths are resolved against the directory of the job file by
    :meth:`from_json`.
    """

    lights: LightConfig | Path
    pixel_pitch: PositiveFloat
    shadow_threshold: float = Field(default_factory=lambda: InspectionSettings().shadow_threshold, ge=0.0, lt=1.0)
    refit_shadows: bool = Field(default_factory=lambda: InspectionSettings().refit_shadows)
    normal_sigma: float = Field(default_factory=lambda: InspectionSettings().normal_sigma, ge=0.0)
    leveling: LevelingParams | None = None
    skip_leveling: bool = False
    slice_count: PositiveInt = Field(default_factory=lambda: InspectionSettings().slice_count)
    via_prefix: str = ""
    images: list[Path] = Field(min_length=1)
    depth_out: Path
    leveled_out: Path | None = None
    metrics_out: Path
    summary_out: Path | None = None
    reference: list[ReferenceValue] | None = None
    report_out: Path | None = None

    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _check_paths(self) -> Self:
        paths = [*self.images, self.depth_out, self.leveled_out, self.metrics_out, self.summary_out, self.report_out]
        if isinstance(self.lights, Path):
            paths.append(self.lights)
        names = [str(path) for path in paths if path is not None]
        if len(names) != len(set(names)):
            raise ValueError("every path of a job must be distinct")
        if (self.reference is None) != (self.report_out is None):
            raise ValueError("reference and report_out must be given together")
        return self

    def light_set(self) -> LightSet:
        """Resolve the light layout, reading it from disk when given as a path."""
        config = LightConfig.from_json(self.lights) if isinstance(self.lights, Path) else self.lights
        return config.to_light_set()

    def resolved(self, base: Path) -> Self:
        """Return a copy whose relative paths are anchored at ``base``."""

        def anchor(path: Path | None) -> Path | None:
            return None if path is None or path.is_absolute() else base / path

        update = {
            name: anchor(getattr(self, name))
            for name in ("depth_out", "leveled_out", "metrics_out", "summary_out", "report_out")
            if anchor(getattr(self, name)) is not None
        }
        update["images"] = [anchor(path) or path for path in self.images]
        if isinstance(self.lights, Path) and not self.lights.is_absolute():
            update["lights"] = base / self.lights
        return self.model_copy(update=update)

    @classmethod
    @validate_call
    def from_json(cls, path: FilePath) -> Self:
        """Load a job file and anchor its relative paths at the file's directory."""
        return cls.model_validate_json(path.read_bytes()).resolved(path.parent)
