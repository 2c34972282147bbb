"""Raster containers exchanged between the pipeline stages.

Rasters are numpy arrays indexed ``[row, column]`` (y down, x right). Pixel
``(row, col)`` has its center at ``((col + 0.5) * pitch, (row + 0.5) * pitch)``
micrometers.
"""

from typing import Annotated

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, PositiveFloat, model_validator


UNIT_TOLERANCE = 1e-9
NORMAL_TOLERANCE = 1e-6


def _as_float_array(value: object) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


def _as_bool_array(value: object) -> np.ndarray:
    return np.asarray(value, dtype=bool)


FloatArray = Annotated[np.ndarray, BeforeValidator(_as_float_array)]
BoolArray = Annotated[np.ndarray, BeforeValidator(_as_bool_array)]


class RasterModel(BaseModel):
    """Base model for containers holding numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True, extra="forbid")


class ImageStack(RasterModel):
    """
    K co-registered grayscale frames, one per illumination direction.

    Attributes
    ----------
    frames : np.ndarray
        Array of shape ``(K, height, width)`` with linear intensities in [0, 1].
    pixel_pitch : float
        Micrometers per pixel, identical in x and y.

    """

    frames: FloatArray
    pixel_pitch: PositiveFloat = 1.0

    @model_validator(mode="after")
    def _check_frames(self) -> "ImageStack":
        if self.frames.ndim != 3:
            raise ValueError(f"frames must have shape (K, height, width), got {self.frames.shape}")
        if self.frames.shape[0] < 3:
            raise ValueError(f"photometric stereo needs at least 3 images, got {self.frames.shape[0]}")
        if not np.all(np.isfinite(self.frames)):
            raise ValueError("frames contain non-finite intensities")
        if self.frames.min() < 0.0 or self.frames.max() > 1.0:
            raise ValueError("frame intensities must lie in [0, 1]")
        return self

    @property
    def count(self) -> int:
        """Number of frames K."""
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        """Raster height in pixels."""
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        """Raster width in pixels."""
        return self.frames.shape[2]

    def permuted(self, order: list[int]) -> "ImageStack":
        """Return a copy with frames reordered."""
        return ImageStack(frames=self.frames[list(order)], pixel_pitch=self.pixel_pitch)


class LightSet(RasterModel):
    """
    K unit illumination directions paired with an image stack.

    The rank of the direction matrix is checked when solving, not here.
    """

    directions: FloatArray

    @model_validator(mode="after")
    def _check_directions(self) -> "LightSet":
        if self.directions.ndim != 2 or self.directions.shape[1] != 3:
            raise ValueError(f"directions must have shape (K, 3), got {self.directions.shape}")
        norms = np.linalg.norm(self.directions, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOLERANCE):
            raise ValueError("every light direction must be a unit vector")
        if np.any(self.directions[:, 2] <= 0.0):
            raise ValueError("every light must illuminate from above the wafer plane (lz > 0)")
        return self

    @property
    def count(self) -> int:
        """Number of directions K."""
        return self.directions.shape[0]

    def permuted(self, order: list[int]) -> "LightSet":
        """Return a copy with directions reordered."""
        return LightSet(directions=self.directions[list(order)])


class NormalField(RasterModel):
    """Per-pixel unit normals, albedo and validity mask."""

    normals: FloatArray
    albedo: FloatArray
    mask: BoolArray

    @model_validator(mode="after")
    def _check_field(self) -> "NormalField":
        shape = self.mask.shape
        if self.normals.shape != (*shape, 3) or self.albedo.shape != shape:
            raise ValueError("normals, albedo and mask shapes disagree")
        valid = self.normals[self.mask]
        if valid.size:
            if np.any(np.abs(np.linalg.norm(valid, axis=1) - 1.0) > NORMAL_TOLERANCE):
                raise ValueError("valid normals must have unit length")
            if np.any(valid[:, 2] <= 0.0):
                raise ValueError("valid normals must point up (nz > 0)")
        invalid = ~self.mask
        if np.any(self.normals[invalid] != (0.0, 0.0, 1.0)) or np.any(self.albedo[invalid] != 0.0):
            raise ValueError("masked pixels must carry the (0, 0, 1) sentinel and zero albedo")
        return self

    @property
    def shape(self) -> tuple[int, int]:
        """Raster shape ``(height, width)``."""
        return self.mask.shape


class GradientField(RasterModel):
    """Surface slopes p = dz/dx and q = dz/dy per pixel (y-down raster frame)."""

    p: FloatArray
    q: FloatArray
    mask: BoolArray

    @model_validator(mode="after")
    def _check_field(self) -> "GradientField":
        if self.p.shape != self.q.shape or self.p.shape != self.mask.shape or self.p.ndim != 2:
            raise ValueError("p, q and mask must be 2D arrays of identical shape")
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.q))):
            raise ValueError("gradients must be finite")
        if np.any(self.p[~self.mask] != 0.0) or np.any(self.q[~self.mask] != 0.0):
            raise ValueError("masked pixels must carry zero gradients")
        return self

    @classmethod
    def unmasked(cls, p: np.ndarray, q: np.ndarray) -> "GradientField":
        """Build a field where every pixel is valid."""
        p = _as_float_array(p)
        return cls(p=p, q=q, mask=np.ones(p.shape, dtype=bool))


class DepthMap(RasterModel):
    """
    Surface height raster.

    Attributes
    ----------
    z : np.ndarray
        Heights in micrometers, shape ``(height, width)``. Vias are negative
        relative to the surrounding wafer before detrending.
    pixel_pitch : float
        Micrometers per pixel.

    """

    z: FloatArray
    pixel_pitch: PositiveFloat = 1.0

    @model_validator(mode="after")
    def _check_depth(self) -> "DepthMap":
        if self.z.ndim != 2 or self.z.size == 0:
            raise ValueError(f"z must be a non-empty 2D array, got shape {self.z.shape}")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("depth values must be finite")
        return self

    @property
    def height(self) -> int:
        """Raster height in pixels."""
        return self.z.shape[0]

    @property
    def width(self) -> int:
        """Raster width in pixels."""
        return self.z.shape[1]

    @property
    def peak_to_valley(self) -> float:
        """Difference between the highest and lowest pixel."""
        return float(self.z.max() - self.z.min())

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Return pixel-center coordinates ``(x, y)`` in micrometers."""
        return pixel_centers(self.height, self.width, self.pixel_pitch)


def pixel_centers(height: int, width: int, pixel_pitch: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Compute pixel-center coordinates of a raster.

    Parameters
    ----------
    height, width : int
        Raster shape.
    pixel_pitch : float
        Micrometers per pixel.

    Returns
    -------
    tuple of np.ndarray
        ``(x, y)`` arrays of shape ``(height, width)`` in micrometers.

    """
    cols = (np.arange(width) + 0.5) * pixel_pitch
    rows = (np.arange(height) + 0.5) * pixel_pitch
    x, y = np.meshgrid(cols, rows)
    return x, y
