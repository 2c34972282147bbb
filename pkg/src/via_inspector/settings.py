"""Settings module defining InspectionSettings with numeric defaults and environment support."""

from typing import Literal

from pydantic import Field, PositiveFloat, PositiveInt
from pydantic_settings import BaseSettings, SettingsConfigDict


class InspectionSettings(BaseSettings):
    """
    Default numeric parameters of the reconstruction and inspection pipeline.

    Every field can be overridden with a ``VIA_INSPECTOR_<FIELD>`` environment
    variable, e.g. ``VIA_INSPECTOR_SHADOW_THRESHOLD=0.02``.
    """

    shadow_threshold: float = Field(default=0.01, ge=0.0, lt=1.0)
    refit_shadows: bool = True
    normal_sigma: float = Field(default=0.0, ge=0.0)
    spatial_sigma: PositiveFloat = 2.0
    depth_sigma_fraction: PositiveFloat = 0.1
    metrology_spatial_sigma: PositiveFloat = 1.0
    metrology_depth_sigma_fraction: PositiveFloat = 1.0
    histogram_bins: PositiveInt = 256
    floor_percentile: float = Field(default=1.0, gt=0.0, lt=50.0)
    diameter_level_fraction: float = Field(default=0.1, gt=0.0, lt=1.0)
    slice_count: PositiveInt = 10
    lsc_max_iterations: PositiveInt = 50
    lsc_tolerance: PositiveFloat = 1e-12
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"

    model_config = SettingsConfigDict(env_prefix="VIA_INSPECTOR_", case_sensitive=False)
