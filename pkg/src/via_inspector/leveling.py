"""Depth leveling filter favoring depths close to the average depth."""

import math
from typing import Literal, Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, model_validator
from scipy.ndimage import correlate

from via_inspector.errors import DegenerateWeights
from via_inspector.logger import logger
from via_inspector.rasters import DepthMap
from via_inspector.settings import InspectionSettings


MIN_WEIGHT_SUM = 1e-300


class LevelingParams(BaseModel):
    """
    Free parameters of the leveling filter.

    Attributes
    ----------
    spatial_sigma : float
        Standard deviation of the spatial Gaussian, in pixels.
    depth_sigma : float
        Standard deviation of the depth-proximity weight, in micrometers.
    window_radius : int
        Half-size of the square window; defaults to ``ceil(3 * spatial_sigma)``.
    mean_region : {"full", "surface"}
        Pixels averaged into the reference depth: the whole raster, or the
        pixels at or above the median depth.

    """

    spatial_sigma: PositiveFloat
    depth_sigma: PositiveFloat
    window_radius: int | None = Field(default=None, ge=1)
    mean_region: Literal["full", "surface"] = "full"

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def _default_radius(self) -> Self:
        if self.window_radius is None:
            object.__setattr__(self, "window_radius", max(1, math.ceil(3.0 * self.spatial_sigma)))
        return self


def default_leveling_params(depth: DepthMap, settings: InspectionSettings | None = None) -> LevelingParams:
    """Build scale-relative defaults: depth sigma is a fraction of the map's peak-to-valley."""
    settings = settings or InspectionSettings()
    peak_to_valley = depth.peak_to_valley
    depth_sigma = settings.depth_sigma_fraction * peak_to_valley if peak_to_valley > 0.0 else 1.0
    return LevelingParams(spatial_sigma=settings.spatial_sigma, depth_sigma=depth_sigma)


def metrology_leveling_params(depth: DepthMap, settings: InspectionSettings | None = None) -> LevelingParams:
    """
    Build the mild leveling used before measuring: a one-pixel spatial sigma and
    a depth sigma equal to the map's peak-to-valley, which keeps via walls in place.
    """
    settings = settings or InspectionSettings()
    peak_to_valley = depth.peak_to_valley
    depth_sigma = settings.metrology_depth_sigma_fraction * peak_to_valley if peak_to_valley > 0.0 else 1.0
    return LevelingParams(spatial_sigma=settings.metrology_spatial_sigma, depth_sigma=depth_sigma)


def depth_weight(z: np.ndarray | float, mean: float, depth_sigma: float) -> np.ndarray:
    """Return ``exp(-(z - mean)^2 / (2 depth_sigma^2))``, decreasing in ``|z - mean|``."""
    return np.exp(-((np.asarray(z, dtype=np.float64) - mean) ** 2) / (2.0 * depth_sigma**2))


def reference_depth(z: np.ndarray, mean_region: Literal["full", "surface"] = "full") -> float:
    """Mean depth over the whole raster or over its upper half (surface)."""
    if mean_region == "surface":
        return float(z[z >= np.median(z)].mean())
    return float(z.mean())


def spatial_kernel(spatial_sigma: float, window_radius: int) -> np.ndarray:
    """Return the unnormalized ``(2r + 1)^2`` Gaussian window."""
    offsets = np.arange(-window_radius, window_radius + 1, dtype=np.float64)
    squared = offsets[:, None] ** 2 + offsets[None, :] ** 2
    return np.exp(-squared / (2.0 * spatial_sigma**2))


def level_depth(depth: DepthMap, params: LevelingParams) -> DepthMap:
    """
    Smooth a depth map, weighting samples by their proximity to the average depth.

    Each output pixel is ``sum(G * w * z) / sum(G * w)`` over its window, with
    ``G`` the spatial Gaussian and ``w`` the depth weight around the reference
    mean. Pixels outside the raster do not contribute. The result is shifted
    so its minimum is zero.

    Parameters
    ----------
    depth : DepthMap
        Map to level.
    params : LevelingParams
        Filter parameters.

    Returns
    -------
    DepthMap
        Leveled map, same pitch.

    Raises
    ------
    DegenerateWeights
        If the weights of some window sum below 1e-300.

    """
    z = depth.z
    mean = reference_depth(z, params.mean_region)
    weights = depth_weight(z, mean, params.depth_sigma)
    kernel = spatial_kernel(params.spatial_sigma, params.window_radius)

    numerator = correlate(weights * z, kernel, mode="constant", cval=0.0)
    denominator = correlate(weights, kernel, mode="constant", cval=0.0)
    if np.any(denominator < MIN_WEIGHT_SUM):
        raise DegenerateWeights(
            f"leveling weights vanished in {int((denominator < MIN_WEIGHT_SUM).sum())} windows; "
            f"depth_sigma={params.depth_sigma:.3g} um is too small"
        )
    leveled = numerator / denominator
    logger.debug(
        f"Leveled around mean depth {mean:.4g} um with sigma_s={params.spatial_sigma} px, "
        f"sigma_d={params.depth_sigma:.4g} um, r={params.window_radius}"
    )
    return DepthMap(z=leveled - leveled.min(), pixel_pitch=depth.pixel_pitch)
