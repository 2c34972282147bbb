"""Via metrology: least-squares circles, roundness, slice profiles and reference comparison."""

from collections.abc import Sequence
import math
from typing import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, computed_field, model_validator

from via_inspector.contour import iso_contours
from via_inspector.errors import (
    CollinearPoints,
    InvalidParameter,
    LengthMismatch,
    NoContour,
    NoVia,
    OpenContourOnly,
    TooFewPoints,
)
from via_inspector.logger import logger
from via_inspector.rasters import DepthMap
from via_inspector.settings import InspectionSettings


COLLINEAR_TOLERANCE = 1e-12
CORE_RADIUS_FRACTION = 0.5
PROFILE_SPAN = (0.05, 0.95)
MAX_STEP_HALVINGS = 40
OBJECTIVE_RTOL = 1e-10
NOISE_FLOOR_FACTOR = 3.0
MIN_OUTLINE_VERTICES = 8


class Circle(BaseModel):
    """Circle in micrometers."""

    cx: float = Field(allow_inf_nan=False)
    cy: float = Field(allow_inf_nan=False)
    r: PositiveFloat = Field(allow_inf_nan=False)

    model_config = ConfigDict(extra="forbid", frozen=True)


class SliceProfile(BaseModel):
    """Least-squares circle of the via contour at one depth below the surface."""

    level: float = Field(ge=0.0)
    circle: Circle
    roundness: float = Field(ge=0.0)
    point_count: int = Field(ge=3)

    model_config = ConfigDict(extra="forbid", frozen=True)


class ViaMeasurement(BaseModel):
    """Depth, diameter and roundness profile of one via."""

    depth: PositiveFloat
    diameter: PositiveFloat
    profiles: list[SliceProfile] = Field(default_factory=list)
    via_id: str = "1"

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def _check_order(self) -> Self:
        levels = [profile.level for profile in self.profiles]
        if levels != sorted(levels):
            raise ValueError("profiles must be sorted by ascending level")
        return self


class ReferenceValue(BaseModel):
    """Known depth and diameter of a via."""

    depth: PositiveFloat
    diameter: PositiveFloat
    via_id: str | None = None

    model_config = ConfigDict(extra="forbid", frozen=True)


class ComparisonRow(BaseModel):
    """Measured versus reference values of one via; errors are derived from the operands."""

    via_id: str
    ref_depth: PositiveFloat
    meas_depth: float
    ref_diameter: PositiveFloat
    meas_diameter: float

    model_config = ConfigDict(extra="forbid", frozen=True)

    @computed_field
    @property
    def depth_error(self) -> float:
        """Measured minus reference depth, micrometers."""
        return self.meas_depth - self.ref_depth

    @computed_field
    @property
    def depth_error_pct(self) -> float:
        """Depth error as a percentage of the reference."""
        return 100.0 * self.depth_error / self.ref_depth

    @computed_field
    @property
    def diameter_error(self) -> float:
        """Measured minus reference diameter, micrometers."""
        return self.meas_diameter - self.ref_diameter

    @computed_field
    @property
    def diameter_error_pct(self) -> float:
        """Diameter error as a percentage of the reference."""
        return 100.0 * self.diameter_error / self.ref_diameter


class ComparisonReport(BaseModel):
    """Per-via comparison rows with mean absolute percentage errors."""

    rows: list[ComparisonRow]

    model_config = ConfigDict(extra="forbid", frozen=True)

    @computed_field
    @property
    def depth_mape(self) -> float:
        """Mean absolute depth error in percent."""
        return float(np.mean([abs(row.depth_error_pct) for row in self.rows])) if self.rows else 0.0

    @computed_field
    @property
    def diameter_mape(self) -> float:
        """Mean absolute diameter error in percent."""
        return float(np.mean([abs(row.diameter_error_pct) for row in self.rows])) if self.rows else 0.0


def _as_points(points: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    array = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if array.shape[0] < 3:
        raise TooFewPoints(f"at least 3 points are needed, got {array.shape[0]}")
    return array


def _normalize(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Center points on their mean and scale them to unit RMS distance."""
    mean = points.mean(axis=0)
    centered = points - mean
    scale = float(np.sqrt(np.mean(np.sum(centered**2, axis=1))))
    singular = np.linalg.svd(centered, compute_uv=False)
    if scale == 0.0 or singular[1] <= COLLINEAR_TOLERANCE * singular[0]:
        raise CollinearPoints("points are collinear, no circle passes through them")
    return centered / scale, mean, scale


def _kasa(normalized: np.ndarray) -> np.ndarray:
    """Algebraic circle fit ``2 a x + 2 b y + c = x^2 + y^2`` on normalized points."""
    design = np.column_stack([2.0 * normalized, np.ones(normalized.shape[0])])
    target = np.sum(normalized**2, axis=1)
    (a, b, c), *_ = np.linalg.lstsq(design, target, rcond=None)
    return np.array([a, b, math.sqrt(max(c + a * a + b * b, 0.0))])


def _objective(normalized: np.ndarray, params: np.ndarray) -> float:
    distances = np.hypot(normalized[:, 0] - params[0], normalized[:, 1] - params[1])
    return float(np.sum((distances - params[2]) ** 2))


def _to_circle(params: np.ndarray, mean: np.ndarray, scale: float) -> Circle:
    return Circle(cx=mean[0] + scale * params[0], cy=mean[1] + scale * params[1], r=scale * params[2])


def algebraic_fit(points: Sequence[Sequence[float]] | np.ndarray) -> Circle:
    """Closed-form algebraic circle fit used to initialize :func:`fit_lsc`."""
    normalized, mean, scale = _normalize(_as_points(points))
    return _to_circle(_kasa(normalized), mean, scale)


def geometric_objective(points: Sequence[Sequence[float]] | np.ndarray, circle: Circle) -> float:
    """Sum of squared radial deviations ``sum((d_i - r)^2)``."""
    array = _as_points(points)
    distances = np.hypot(array[:, 0] - circle.cx, array[:, 1] - circle.cy)
    return float(np.sum((distances - circle.r) ** 2))


def fit_lsc(
    points: Sequence[Sequence[float]] | np.ndarray,
    max_iterations: int | None = None,
    tolerance: float | None = None,
) -> Circle:
    """
    Fit the least-squares circle minimizing ``sum((d_i - r)^2)``.

    The algebraic fit gives the start point, then Gauss-Newton steps refine
    center and radius on the geometric objective. A step that would increase
    the objective beyond its rounding level is halved until it does not, and
    iteration stops once the step norm falls below ``tolerance``. The result
    never has a larger objective than the start point.

    Parameters
    ----------
    points : array-like of shape (n, 2)
        Contour points in micrometers.
    max_iterations : int, optional
        Gauss-Newton step limit, ``InspectionSettings().lsc_max_iterations`` by default.
    tolerance : float, optional
        Convergence threshold on the step norm (in units of the point cloud's
        RMS radius), ``InspectionSettings().lsc_tolerance`` by default.

    Returns
    -------
    Circle
        Fitted circle.

    Raises
    ------
    TooFewPoints
        If fewer than 3 points are given.
    CollinearPoints
        If the points are collinear.

    """
    settings = InspectionSettings()
    max_iterations = max_iterations or settings.lsc_max_iterations
    tolerance = tolerance or settings.lsc_tolerance

    normalized, mean, scale = _normalize(_as_points(points))
    start = _kasa(normalized)
    start_objective = _objective(normalized, start)
    params, objective = start, start_objective

    iteration = 0
    for iteration in range(1, max_iterations + 1):
        dx = normalized[:, 0] - params[0]
        dy = normalized[:, 1] - params[1]
        distances = np.maximum(np.hypot(dx, dy), np.finfo(float).tiny)
        residuals = distances - params[2]
        jacobian = np.column_stack([-dx / distances, -dy / distances, -np.ones_like(distances)])
        step, *_ = np.linalg.lstsq(jacobian, -residuals, rcond=None)

        # Objective changes below rounding cannot rank steps near the minimum.
        for _ in range(MAX_STEP_HALVINGS):
            candidate = params + step
            candidate_objective = _objective(normalized, candidate)
            if candidate_objective <= objective * (1.0 + OBJECTIVE_RTOL):
                break
            step = step / 2.0
        else:
            break
        params, objective = candidate, candidate_objective
        if np.linalg.norm(step) < tolerance:
            break

    if objective > start_objective:
        params, objective = start, start_objective
    logger.debug(f"LSC converged after {iteration} Gauss-Newton steps, objective {objective * scale**2:.3e}")
    return _to_circle(params, mean, scale)


def roundness(points: Sequence[Sequence[float]] | np.ndarray, circle: Circle) -> float:
    """Peak-to-valley radial deviation ``max(d_i) - min(d_i)`` about the circle center."""
    array = _as_points(points)
    distances = np.hypot(array[:, 0] - circle.cx, array[:, 1] - circle.cy)
    return float(distances.max() - distances.min())


def surface_reference(z: np.ndarray, bins: int | None = None) -> float:
    """
    Return the modal depth of a raster.

    The histogram peak bin is located and the median of the samples falling
    in it is returned.
    """
    bins = bins or InspectionSettings().histogram_bins
    low, high = float(z.min()), float(z.max())
    if high <= low:
        return low
    counts, edges = np.histogram(z, bins=bins, range=(low, high))
    peak = int(np.argmax(counts))
    in_peak = (z >= edges[peak]) & (z <= edges[peak + 1])
    return float(np.median(z[in_peak]))


def estimate_noise_sigma(z: np.ndarray) -> float:
    """Robust depth noise estimate from the median absolute neighbor difference."""
    differences = np.concatenate([np.diff(z, axis=0).ravel(), np.diff(z, axis=1).ravel()])
    if differences.size == 0:
        return 0.0
    mad = np.median(np.abs(differences - np.median(differences)))
    return float(1.4826 * mad / math.sqrt(2.0))


def _closed_outlines(depth: DepthMap, level: float, surface: float) -> list[np.ndarray]:
    """Return the closed contours at ``level`` below ``surface`` as ``(x, y)`` arrays, longest first."""
    iso = surface - level
    if level <= 0.0 or iso <= float(depth.z.min()) or iso >= float(depth.z.max()):
        raise NoContour(f"level {level:.4g} um is outside the depth range of the map")
    contours = iso_contours(depth.z, iso)
    if not contours:
        raise NoContour(f"no contour at level {level:.4g} um")
    closed = [contour for contour in contours if contour.closed]
    if not closed:
        raise OpenContourOnly(f"contours at level {level:.4g} um are all clipped by the raster border")
    outlines = []
    for contour in sorted(closed, key=lambda contour: contour.length, reverse=True):
        rows, cols = contour.vertices()
        outlines.append(np.column_stack([(cols + 0.5) * depth.pixel_pitch, (rows + 0.5) * depth.pixel_pitch]))
    return outlines


def _contour_points(depth: DepthMap, level: float, surface: float, near: Circle | None = None) -> np.ndarray:
    """
    Pick one closed contour at ``level``.

    Without ``near`` the longest contour wins. With ``near`` the contour whose
    centroid is closest to the circle center is returned, provided the
    centroid lies inside that circle.
    """
    outlines = _closed_outlines(depth, level, surface)
    if near is None:
        return outlines[0]
    offsets = [math.hypot(*(outline.mean(axis=0) - (near.cx, near.cy))) for outline in outlines]
    best = int(np.argmin(offsets))
    if offsets[best] > near.r:
        raise NoContour(f"no contour at level {level:.4g} um around ({near.cx:.4g}, {near.cy:.4g}) um")
    return outlines[best]


def extract_slice_contour(depth: DepthMap, level: float, bins: int | None = None) -> np.ndarray:
    """
    Extract the via contour at ``level`` micrometers below the surface.

    The surface is the modal depth of the raster. The iso line at
    ``surface - level`` is traced with marching squares and the longest closed
    contour is returned.

    Parameters
    ----------
    depth : DepthMap
        Depth raster.
    level : float
        Depth below the surface reference, micrometers.
    bins : int, optional
        Histogram bins used for the surface reference.

    Returns
    -------
    np.ndarray
        Contour points ``(x, y)`` in micrometers, shape (n, 2).

    Raises
    ------
    NoContour
        If the level lies outside the depth range.
    OpenContourOnly
        If every contour touches the raster border.

    """
    return _contour_points(depth, level, surface_reference(depth.z, bins))


def profile_levels(depth: float, slice_count: int) -> np.ndarray:
    """Slice levels evenly spaced from 5 % to 95 % of ``depth``, endpoints included; one slice sits at 50 %."""
    if slice_count == 1:
        return np.array([0.5 * depth])
    low, high = PROFILE_SPAN
    return depth * np.linspace(low, high, slice_count)


def _detect(z: np.ndarray, settings: InspectionSettings) -> tuple[float, float]:
    """Return the surface reference and the depth range down to the floor percentile, or raise NoVia."""
    surface = surface_reference(z, settings.histogram_bins)
    depth_range = surface - float(np.percentile(z, settings.floor_percentile))
    noise_floor = NOISE_FLOOR_FACTOR * estimate_noise_sigma(z)
    if depth_range <= max(noise_floor, 1e-9):
        raise NoVia(f"depth range {depth_range:.3g} um does not exceed the noise floor {noise_floor:.3g} um")
    return surface, depth_range


def _measure_one(
    depth: DepthMap,
    locator: Circle,
    surface: float,
    slice_count: int,
    settings: InspectionSettings,
    via_id: str,
) -> ViaMeasurement:
    x, y = depth.coordinates()
    distance = np.hypot(x - locator.cx, y - locator.cy)
    core = distance <= CORE_RADIUS_FRACTION * locator.r
    if not np.any(core):
        core = distance <= locator.r
    via_depth = surface - float(np.percentile(depth.z[core], settings.floor_percentile))
    if via_depth <= 0.0:
        raise NoVia(f"the floor of via {via_id} is not below the surface reference")

    outline = _contour_points(depth, settings.diameter_level_fraction * via_depth, surface, near=locator)
    diameter = 2.0 * fit_lsc(outline, settings.lsc_max_iterations, settings.lsc_tolerance).r

    profiles = []
    for level in profile_levels(via_depth, slice_count):
        try:
            points = _contour_points(depth, float(level), surface, near=locator)
            circle = fit_lsc(points, settings.lsc_max_iterations, settings.lsc_tolerance)
        except (NoContour, OpenContourOnly, CollinearPoints, TooFewPoints) as exc:
            logger.warning(f"Skipping slice of via {via_id} at {level:.4g} um: {exc}")
            continue
        profiles.append(
            SliceProfile(
                level=float(level),
                circle=circle,
                roundness=roundness(points, circle),
                point_count=points.shape[0],
            )
        )

    logger.info(
        f"Via {via_id}: depth {via_depth:.4g} um, diameter {diameter:.4g} um, {len(profiles)}/{slice_count} slices"
    )
    return ViaMeasurement(depth=via_depth, diameter=diameter, profiles=profiles, via_id=via_id)


def _check_slice_count(slice_count: int | None, settings: InspectionSettings) -> int:
    slice_count = settings.slice_count if slice_count is None else slice_count
    if slice_count < 1:
        raise InvalidParameter(f"slice_count must be >= 1, got {slice_count}")
    return slice_count


def measure_via(
    depth: DepthMap,
    slice_count: int | None = None,
    settings: InspectionSettings | None = None,
    via_id: str = "1",
) -> ViaMeasurement:
    """
    Measure depth, diameter and roundness-versus-depth of the via in a depth map.

    The via is located by the longest closed contour at 10 % of the map's
    depth range. Depth is the surface reference minus the 1st percentile of
    the via core (the disk of half the locator radius). Diameter is twice the
    least-squares radius at 10 % of the depth. Slices whose contour cannot be
    traced are skipped with a warning.

    Parameters
    ----------
    depth : DepthMap
        Depth raster holding a single via.
    slice_count : int, optional
        Number of profile slices, ``settings.slice_count`` by default.
    settings : InspectionSettings, optional
        Numeric defaults.
    via_id : str
        Identifier carried into reports.

    Returns
    -------
    ViaMeasurement
        Measured values.

    Raises
    ------
    InvalidParameter
        If ``slice_count < 1``.
    NoVia
        If the depth range does not exceed three times the noise estimate or
        no closed contour surrounds a depression.

    """
    settings = settings or InspectionSettings()
    slice_count = _check_slice_count(slice_count, settings)
    surface, depth_range = _detect(depth.z, settings)
    try:
        locator = fit_lsc(_contour_points(depth, settings.diameter_level_fraction * depth_range, surface))
    except (NoContour, OpenContourOnly) as exc:
        raise NoVia(f"no closed via contour near the surface: {exc}") from exc
    return _measure_one(depth, locator, surface, slice_count, settings, via_id)


def _reading_order(locators: list[Circle]) -> list[Circle]:
    """Sort circles top to bottom in rows, left to right within a row."""
    rows: list[list[Circle]] = []
    for circle in sorted(locators, key=lambda circle: circle.cy):
        if rows and circle.cy - rows[-1][0].cy <= rows[-1][0].r:
            rows[-1].append(circle)
        else:
            rows.append([circle])
    return [circle for row in rows for circle in sorted(row, key=lambda circle: circle.cx)]


def measure_vias(
    depth: DepthMap,
    slice_count: int | None = None,
    settings: InspectionSettings | None = None,
    id_prefix: str = "",
) -> list[ViaMeasurement]:
    """
    Measure every via of a depth map.

    Each closed contour at 10 % of the map's depth range locates one via.
    Vias are numbered in reading order (rows top to bottom, then left to
    right) with identifiers ``f"{id_prefix}{k}"`` starting at 1. A via whose
    measurement fails is skipped with a warning.

    Raises
    ------
    InvalidParameter
        If ``slice_count < 1``.
    NoVia
        If no via can be measured.

    """
    settings = settings or InspectionSettings()
    slice_count = _check_slice_count(slice_count, settings)
    surface, depth_range = _detect(depth.z, settings)
    try:
        outlines = _closed_outlines(depth, settings.diameter_level_fraction * depth_range, surface)
    except (NoContour, OpenContourOnly) as exc:
        raise NoVia(f"no closed via contour near the surface: {exc}") from exc

    locators = []
    for outline in outlines:
        if outline.shape[0] < MIN_OUTLINE_VERTICES:
            continue
        try:
            locators.append(fit_lsc(outline, settings.lsc_max_iterations, settings.lsc_tolerance))
        except CollinearPoints as exc:
            logger.warning(f"Ignoring a degenerate outline: {exc}")

    measurements = []
    for index, locator in enumerate(_reading_order(locators), start=1):
        via_id = f"{id_prefix}{index}"
        try:
            measurements.append(_measure_one(depth, locator, surface, slice_count, settings, via_id))
        except (NoVia, NoContour, OpenContourOnly, CollinearPoints, TooFewPoints) as exc:
            logger.warning(f"Skipping via {via_id} at ({locator.cx:.4g}, {locator.cy:.4g}) um: {exc}")
    if not measurements:
        raise NoVia("no closed via contour could be measured")
    return measurements


class TrialStatistics(BaseModel):
    """Spread of one via's depth and diameter over repeated acquisitions."""

    via_id: str
    trials: int = Field(ge=1)
    depth_mean: float
    depth_std: float = Field(ge=0.0)
    diameter_mean: float
    diameter_std: float = Field(ge=0.0)

    model_config = ConfigDict(extra="forbid", frozen=True)


def trial_statistics(trials: Sequence[Sequence[ViaMeasurement]]) -> list[TrialStatistics]:
    """
    Aggregate measurements of repeated trials per via identifier.

    Standard deviations are sample deviations (``ddof=1``) and zero for a
    single trial. Vias appear in the order they are first seen.
    """
    grouped: dict[str, list[ViaMeasurement]] = {}
    for measurements in trials:
        for measurement in measurements:
            grouped.setdefault(measurement.via_id, []).append(measurement)

    statistics = []
    for via_id, measurements in grouped.items():
        depths = np.array([measurement.depth for measurement in measurements])
        diameters = np.array([measurement.diameter for measurement in measurements])
        ddof = 1 if len(measurements) > 1 else 0
        statistics.append(
            TrialStatistics(
                via_id=via_id,
                trials=len(measurements),
                depth_mean=float(depths.mean()),
                depth_std=float(depths.std(ddof=ddof)),
                diameter_mean=float(diameters.mean()),
                diameter_std=float(diameters.std(ddof=ddof)),
            )
        )
    return statistics


def compare_to_reference(
    measured: Sequence[ViaMeasurement],
    reference: Sequence[ReferenceValue | tuple[float, float]],
) -> ComparisonReport:
    """
    Compare measured depths and diameters with known references.

    Parameters
    ----------
    measured : sequence of ViaMeasurement
        Measurements in via order.
    reference : sequence of ReferenceValue or (depth, diameter)
        References in the same order.

    Returns
    -------
    ComparisonReport
        One row per via and the mean absolute percentage errors.

    Raises
    ------
    LengthMismatch
        If the two lists differ in length.
    InvalidParameter
        If a reference value is not positive.

    """
    if len(measured) != len(reference):
        raise LengthMismatch(f"{len(measured)} measurements but {len(reference)} reference values")
    rows = []
    for measurement, ref in zip(measured, reference, strict=True):
        if not isinstance(ref, ReferenceValue):
            ref_depth, ref_diameter = ref
            if ref_depth <= 0.0 or ref_diameter <= 0.0:
                raise InvalidParameter(f"reference values must be positive, got {ref}")
            ref = ReferenceValue(depth=ref_depth, diameter=ref_diameter)
        rows.append(
            ComparisonRow(
                via_id=ref.via_id or measurement.via_id,
                ref_depth=ref.depth,
                meas_depth=measurement.depth,
                ref_diameter=ref.diameter,
                meas_diameter=measurement.diameter,
            )
        )
    report = ComparisonReport(rows=rows)
    logger.info(
        f"Compared {len(rows)} vias: depth MAPE {report.depth_mape:.3g} %, "
        f"diameter MAPE {report.diameter_mape:.3g} %"
    )
    return report
