"""Lambertian photometric stereo: light normalization, normal/albedo estimation and slopes."""

from collections.abc import Sequence
import math

import numpy as np

from via_inspector.errors import BelowPlane, RankDeficientLights, ShapeMismatch, ZeroVector
from via_inspector.logger import logger
from via_inspector.rasters import GradientField, ImageStack, LightSet, NormalField
from via_inspector.settings import InspectionSettings


MIN_SAMPLES = 3
MIN_ALBEDO = 1e-9
ZERO_NORM = 1e-12


def normalize_lights(raw_positions: Sequence[Sequence[float]] | np.ndarray) -> LightSet:
    """
    Convert light source positions into unit illumination directions.

    Parameters
    ----------
    raw_positions : sequence of (x, y, z)
        Light positions in millimeters relative to the sample center.

    Returns
    -------
    LightSet
        Directions ``position / ||position||`` in the input order.

    Raises
    ------
    ZeroVector
        If a position has norm below 1e-12.
    BelowPlane
        If a position has z <= 0.

    """
    positions = np.asarray(raw_positions, dtype=np.float64).reshape(-1, 3)
    norms = np.linalg.norm(positions, axis=1)
    for index, (position, norm) in enumerate(zip(positions, norms, strict=True)):
        if norm < ZERO_NORM:
            raise ZeroVector(f"light {index} has a zero position vector")
        if position[2] <= 0.0:
            raise BelowPlane(f"light {index} at {tuple(position)} is not above the wafer plane")
    return LightSet(directions=positions / norms[:, None])


def _check_rank(directions: np.ndarray) -> None:
    if np.linalg.matrix_rank(directions) < 3:
        raise RankDeficientLights(f"the {directions.shape[0]} light directions are coplanar (rank < 3)")


def _solve_groups(
    intensities: np.ndarray,
    directions: np.ndarray,
    used: np.ndarray,
    columns: np.ndarray,
    m: np.ndarray,
    residual: np.ndarray,
    solved: np.ndarray,
) -> None:
    """Solve the given pixel columns in place, one pseudo-inverse per distinct set of used lights."""
    count = directions.shape[0]
    weights = np.left_shift(1, np.arange(count, dtype=np.int64))
    keys = weights @ used[:, columns].astype(np.int64)
    m[columns] = 0.0
    residual[columns] = 0.0
    solved[columns] = False
    for key in np.unique(keys):
        rows = (int(key) >> np.arange(count)) & 1 == 1
        sub_lights = directions[rows]
        if np.linalg.matrix_rank(sub_lights) < 3:
            continue
        group = columns[keys == key]
        samples = intensities[np.ix_(rows, group)]
        solution = np.linalg.pinv(sub_lights) @ samples
        m[group] = solution.T
        residual[group] = np.linalg.norm(sub_lights @ solution - samples, axis=0)
        solved[group] = True


def _solve_pixels(
    intensities: np.ndarray,
    directions: np.ndarray,
    shadow_threshold: float,
    refit_shadows: bool = False,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Solve ``L m = I`` per pixel.

    Pixels with at least four samples above the shadow threshold drop the
    samples at or below it; pixels with exactly three keep all K samples.
    With ``refit_shadows`` the used sample with the most negative predicted
    shading ``l . m`` is dropped and the pixel solved again, one sample per
    round, while more than three samples remain.

    Returns
    -------
    tuple of np.ndarray
        ``m`` of shape (N, 3), ``solved`` boolean of shape (N,) and the
        least-squares residual norm of shape (N,).

    """
    pixels = intensities.shape[1]
    above = intensities > shadow_threshold
    usable_count = above.sum(axis=0)
    enough = usable_count >= MIN_SAMPLES
    used = np.where(usable_count > MIN_SAMPLES, above, True) & enough

    m = np.zeros((pixels, 3))
    residual = np.zeros(pixels)
    solved = np.zeros(pixels, dtype=bool)

    pending = np.flatnonzero(enough)
    rounds = 0
    while pending.size:
        _solve_groups(intensities, directions, used, pending, m, residual, solved)
        if not refit_shadows:
            break
        predicted = directions @ m[pending].T
        negative = used[:, pending] & (predicted <= 0.0)
        refit = solved[pending] & negative.any(axis=0) & (used[:, pending].sum(axis=0) > MIN_SAMPLES)
        if not refit.any():
            break
        pending = pending[refit]
        worst = np.argmin(np.where(negative[:, refit], predicted[:, refit], np.inf), axis=0)
        used[worst, pending] = False
        rounds += 1
    if rounds:
        logger.debug(f"Attached-shadow refit ran {rounds} rounds")
    return m, solved, residual


def estimate_normals(
    stack: ImageStack,
    lights: LightSet,
    shadow_threshold: float | None = None,
    refit_shadows: bool = False,
) -> NormalField:
    """
    Estimate per-pixel unit normals and albedo by linear least squares.

    Each pixel solves ``L m = I`` where ``I`` holds its intensities, then
    ``albedo = ||m||`` and ``n = m / albedo``. When at least four samples
    exceed ``shadow_threshold`` the others are left out of the pixel's solve;
    with exactly three the plain solve over all K samples is used. Pixels with
    fewer than three samples above the threshold, a rank-deficient light
    subset, albedo below 1e-9 or a normal not pointing up are masked.

    Parameters
    ----------
    stack : ImageStack
        K frames of linear intensity.
    lights : LightSet
        K unit directions matching the frames.
    shadow_threshold : float, optional
        Intensity threshold; defaults to ``InspectionSettings().shadow_threshold``.
    refit_shadows : bool
        Also drop samples whose fitted shading is not positive (attached
        shadows that leak above the threshold) and solve again.

    Returns
    -------
    NormalField
        Normals, albedo and validity mask.

    Raises
    ------
    ShapeMismatch
        If the frame count differs from the light count.
    RankDeficientLights
        If the light directions are coplanar.

    """
    if shadow_threshold is None:
        shadow_threshold = InspectionSettings().shadow_threshold
    if stack.count != lights.count:
        raise ShapeMismatch(f"{stack.count} frames but {lights.count} light directions")
    _check_rank(lights.directions)

    intensities = stack.frames.reshape(stack.count, -1)
    m, solved, _ = _solve_pixels(intensities, lights.directions, shadow_threshold, refit_shadows)

    albedo = np.linalg.norm(m, axis=1)
    valid = solved & (albedo >= MIN_ALBEDO) & (m[:, 2] > 0.0)
    normals = np.tile([0.0, 0.0, 1.0], (m.shape[0], 1))
    normals[valid] = m[valid] / albedo[valid, None]
    albedo = np.where(valid, albedo, 0.0)

    shape = (stack.height, stack.width)
    masked = int(valid.size - valid.sum())
    logger.debug(f"Estimated normals on {shape[1]}x{shape[0]} pixels from {stack.count} lights, {masked} masked")
    if masked > valid.size // 2:
        logger.warning(f"More than half of the pixels ({masked}/{valid.size}) have no valid normal")
    return NormalField(
        normals=normals.reshape(*shape, 3),
        albedo=albedo.reshape(shape),
        mask=valid.reshape(shape),
    )


def smooth_normals(field: NormalField, spatial_sigma: float, max_angle_deg: float = 20.0) -> NormalField:
    """
    Average ``albedo * n`` over a Gaussian window of similar valid neighbors.

    A neighbor contributes only when it is valid and its normal lies within
    ``max_angle_deg`` of the center normal, so walls are not mixed with the
    surface or floor around them. The sum is renormalized; albedo and mask are
    kept, except that pixels whose averaged normal no longer points up are
    masked. ``spatial_sigma <= 0`` returns the field unchanged.

    Parameters
    ----------
    field : NormalField
        Normals to smooth.
    spatial_sigma : float
        Gaussian standard deviation in pixels; the window radius is
        ``ceil(2 * spatial_sigma)``.
    max_angle_deg : float
        Largest angle between center and neighbor normals that still averages.

    Returns
    -------
    NormalField
        Smoothed normals.

    """
    if spatial_sigma <= 0.0:
        return field
    radius = max(1, math.ceil(2.0 * spatial_sigma))
    cos_limit = math.cos(math.radians(max_angle_deg))
    height, width = field.mask.shape

    normals = np.where(field.mask[..., None], field.normals, 0.0)
    weighted = normals * field.albedo[..., None]
    padded_normals = np.pad(normals, ((radius, radius), (radius, radius), (0, 0)))
    padded_weighted = np.pad(weighted, ((radius, radius), (radius, radius), (0, 0)))

    total = np.zeros_like(weighted)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            window = (slice(radius + dy, radius + dy + height), slice(radius + dx, radius + dx + width))
            similar = np.sum(padded_normals[window] * normals, axis=-1) >= cos_limit
            weight = math.exp(-(dx * dx + dy * dy) / (2.0 * spatial_sigma**2))
            total += weight * similar[..., None] * padded_weighted[window]

    valid = field.mask & (total[..., 2] > 0.0)
    length = np.linalg.norm(total, axis=-1, keepdims=True)
    smoothed = np.where(valid[..., None], total / np.where(length > 0.0, length, 1.0), [0.0, 0.0, 1.0])
    logger.debug(f"Smoothed normals with sigma={spatial_sigma} px over a {2 * radius + 1}px window")
    return NormalField(normals=smoothed, albedo=np.where(valid, field.albedo, 0.0), mask=valid)


def solve_residuals(stack: ImageStack, lights: LightSet, shadow_threshold: float | None = None) -> np.ndarray:
    """
    Return the per-pixel least-squares residual norm of the normal solve.

    Unsolvable pixels report 0.
    """
    if shadow_threshold is None:
        shadow_threshold = InspectionSettings().shadow_threshold
    if stack.count != lights.count:
        raise ShapeMismatch(f"{stack.count} frames but {lights.count} light directions")
    _check_rank(lights.directions)
    _, _, residual = _solve_pixels(stack.frames.reshape(stack.count, -1), lights.directions, shadow_threshold)
    return residual.reshape(stack.height, stack.width)


def normals_to_gradients(field: NormalField) -> GradientField:
    """
    Convert unit normals into surface slopes.

    Uses the surface convention ``z(x, y)`` with normal proportional to
    ``(-p, -q, 1)``, so ``p = -nx / nz`` and ``q = -ny / nz``. Masked pixels
    get zero slopes.
    """
    nx, ny, nz = (field.normals[..., axis] for axis in range(3))
    safe_nz = np.where(field.mask, nz, 1.0)
    p = np.where(field.mask, -nx / safe_nz, 0.0)
    q = np.where(field.mask, -ny / safe_nz, 0.0)
    return GradientField(p=p, q=q, mask=field.mask)
