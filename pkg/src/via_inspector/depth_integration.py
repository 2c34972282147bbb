"""Integrate a gradient field into a depth map with a DCT Poisson solver."""

import numpy as np
from scipy.fft import dctn, idctn

from via_inspector.errors import DegenerateFit, EmptyRaster
from via_inspector.logger import logger
from via_inspector.rasters import DepthMap, GradientField


def _check_raster(raster: np.ndarray) -> np.ndarray:
    raster = np.asarray(raster, dtype=np.float64)
    if raster.ndim != 2 or raster.size == 0:
        raise EmptyRaster(f"expected a non-empty 2D raster, got shape {raster.shape}")
    return raster


def _derivative(values: np.ndarray, axis: int) -> np.ndarray:
    # Central differences inside, one-sided on the borders.
    if values.shape[axis] < 2:
        return np.zeros_like(values)
    return np.gradient(values, axis=axis)


def divergence(grad: GradientField) -> np.ndarray:
    """
    Compute the Poisson right-hand side ``f = dp/dx + dq/dy`` in pixel units.

    Parameters
    ----------
    grad : GradientField
        Slopes per pixel; masked pixels carry zeros and take part as such.

    Returns
    -------
    np.ndarray
        Raster of the same shape as the gradients.

    """
    return _derivative(grad.p, axis=1) + _derivative(grad.q, axis=0)


def dct2(raster: np.ndarray) -> np.ndarray:
    """Return the orthonormal 2D type-II DCT of a raster."""
    return dctn(_check_raster(raster), type=2, norm="ortho")


def idct2(coefficients: np.ndarray) -> np.ndarray:
    """Return the inverse of :func:`dct2` (orthonormal 2D type-III DCT)."""
    return idctn(_check_raster(coefficients), type=2, norm="ortho")


def laplacian(z: np.ndarray) -> np.ndarray:
    """
    Apply the 5-point discrete Laplacian with reflective (Neumann) borders.

    This is the operator diagonalized by :func:`dct2`, so
    ``laplacian(poisson_solve(f)) == f - f.mean()``.
    """
    padded = np.pad(_check_raster(z), 1, mode="edge")
    return (
        padded[:-2, 1:-1] + padded[2:, 1:-1] + padded[1:-1, :-2] + padded[1:-1, 2:] - 4.0 * padded[1:-1, 1:-1]
    )


def poisson_solve(f: np.ndarray) -> np.ndarray:
    """
    Solve the discrete Poisson equation with homogeneous Neumann borders.

    In the cosine domain ``z_hat(u, v) = f_hat(u, v) / (2 cos(pi u / M) + 2 cos(pi v / N) - 4)``
    for ``(u, v) != (0, 0)``, and the DC coefficient is pinned to 0. The mean
    of ``f`` is not attainable under Neumann borders and is dropped.

    Parameters
    ----------
    f : np.ndarray
        Finite right-hand side of shape (M, N).

    Returns
    -------
    np.ndarray
        Solution with zero mean.

    """
    f_hat = dct2(f)
    rows, cols = f_hat.shape
    u = np.arange(rows)[:, None]
    v = np.arange(cols)[None, :]
    denominator = 2.0 * np.cos(np.pi * u / rows) + 2.0 * np.cos(np.pi * v / cols) - 4.0
    denominator[0, 0] = 1.0
    z_hat = f_hat / denominator
    z_hat[0, 0] = 0.0
    return idct2(z_hat)


def detrend(z: np.ndarray, mask: np.ndarray | None = None, pixel_pitch: float = 1.0) -> DepthMap:
    """
    Remove the least-squares plane and shift the raster so its minimum is zero.

    Parameters
    ----------
    z : np.ndarray
        Finite heights.
    mask : np.ndarray, optional
        Pixels taking part in the plane fit. Defaults to every pixel.
    pixel_pitch : float
        Micrometers per pixel of the returned map.

    Returns
    -------
    DepthMap
        Detrended map with ``min(z) == 0``.

    Raises
    ------
    DegenerateFit
        If the fitted pixels are collinear.

    """
    z = _check_raster(z)
    rows, cols = np.indices(z.shape, dtype=np.float64)
    fit = np.ones(z.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    design = np.column_stack([cols[fit], rows[fit], np.ones(int(fit.sum()))])
    if design.shape[0] < 3 or np.linalg.matrix_rank(design) < 3:
        raise DegenerateFit(f"plane fit needs 3 non-collinear pixels, got {design.shape[0]} fitted pixels")
    (a, b, c), *_ = np.linalg.lstsq(design, z[fit], rcond=None)
    flattened = z - (a * cols + b * rows + c)
    logger.debug(f"Removed plane a={a:.3e} b={b:.3e} c={c:.3e}")
    return DepthMap(z=flattened - flattened.min(), pixel_pitch=pixel_pitch)


def integrate(grad: GradientField, pixel_pitch: float) -> DepthMap:
    """
    Reconstruct a depth map from slopes.

    Runs divergence, Poisson solve, scaling by ``pixel_pitch`` (slopes are
    per pixel, output heights are micrometers) and detrend. Masked pixels take
    part in the solve with zero slope and are left out of the plane fit.

    Parameters
    ----------
    grad : GradientField
        Surface slopes.
    pixel_pitch : float
        Micrometers per pixel.

    Returns
    -------
    DepthMap
        Detrended depth map in micrometers.

    """
    z = poisson_solve(divergence(grad)) * pixel_pitch
    depth = detrend(z, mask=grad.mask, pixel_pitch=pixel_pitch)
    logger.info(f"Integrated {depth.width}x{depth.height} depth map, peak-to-valley {depth.peak_to_valley:.4g} um")
    return depth
