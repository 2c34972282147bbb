"""Dark-field illumination geometry: aperture angle, critical angle and admissible light heights."""

import math
from typing import Self

from pydantic import BaseModel, ConfigDict, PositiveFloat, model_validator

from via_inspector.errors import InvalidIndex, InvalidNA, NonpositiveOffset
from via_inspector.logger import logger


class ObjectiveSpec(BaseModel):
    """Microscope objective seen by the illumination."""

    numerical_aperture: PositiveFloat
    immersion_index: PositiveFloat = 1.0

    model_config = ConfigDict(extra="forbid", frozen=True)


class SubstrateSpec(BaseModel):
    """
    Wafer substrate.

    Attributes
    ----------
    refractive_index : float
        Index of the substrate, e.g. 1.5 for glass.
    name : str
        Free label.
    exit_index : float
        Index of the medium the light would escape into (1.0 for air).

    """

    refractive_index: PositiveFloat
    name: str = "substrate"
    exit_index: PositiveFloat = 1.0

    model_config = ConfigDict(extra="forbid", frozen=True)


class HeightRange(BaseModel):
    """Admissible light-mount heights in millimeters; both bounds are None when empty."""

    h_min: float | None = None
    h_max: float | None = None

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def _check_bounds(self) -> Self:
        if (self.h_min is None) != (self.h_max is None):
            raise ValueError("h_min and h_max must both be set or both be None")
        if self.h_min is not None and not 0.0 < self.h_min < self.h_max:
            raise ValueError(f"expected 0 < h_min < h_max, got ({self.h_min}, {self.h_max})")
        return self

    @property
    def is_empty(self) -> bool:
        """True when no height satisfies both angular constraints."""
        return self.h_min is None


def aperture_angle(objective: ObjectiveSpec) -> float:
    """
    Return the objective aperture angle ``asin(NA / immersion_index)`` in radians.

    Raises
    ------
    InvalidNA
        If the numerical aperture is not below the immersion index.

    """
    if objective.numerical_aperture >= objective.immersion_index:
        raise InvalidNA(
            f"numerical aperture {objective.numerical_aperture} must be below "
            f"the immersion index {objective.immersion_index}"
        )
    return math.asin(objective.numerical_aperture / objective.immersion_index)


def critical_angle(substrate: SubstrateSpec) -> float:
    """
    Return the total-reflection angle ``asin(exit_index / refractive_index)`` in radians.

    Raises
    ------
    InvalidIndex
        If the substrate index does not exceed the exit index.

    """
    if substrate.refractive_index <= substrate.exit_index:
        raise InvalidIndex(
            f"substrate index {substrate.refractive_index} must exceed the exit index {substrate.exit_index}"
        )
    return math.asin(substrate.exit_index / substrate.refractive_index)


def incidence_angle(lateral_offset: float, height: float) -> float:
    """Angle from the vertical of a light at ``lateral_offset`` and ``height``, ``atan(r / h)``."""
    return math.atan2(lateral_offset, height)


def light_height_range(objective: ObjectiveSpec, substrate: SubstrateSpec, lateral_offset: float) -> HeightRange:
    """
    Compute the light heights keeping the incidence angle between ``2 theta`` and the critical angle.

    A light at lateral offset ``r`` and height ``h`` hits the sample at
    ``alpha = atan(r / h)``. Dark-field imaging needs ``alpha > 2 theta`` and
    avoiding total reflection needs ``alpha < theta_c``, hence
    ``r / tan(theta_c) < h < r / tan(2 theta)``.

    Parameters
    ----------
    objective : ObjectiveSpec
        Objective numerical aperture and immersion.
    substrate : SubstrateSpec
        Substrate indices.
    lateral_offset : float
        Horizontal distance between light and optical axis, millimeters.

    Returns
    -------
    HeightRange
        The open height interval, empty when ``2 theta >= theta_c`` or
        ``2 theta >= pi / 2``.

    Raises
    ------
    NonpositiveOffset
        If ``lateral_offset <= 0``.

    """
    if lateral_offset <= 0.0:
        raise NonpositiveOffset(f"lateral offset must be positive, got {lateral_offset} mm")
    double_aperture = 2.0 * aperture_angle(objective)
    critical = critical_angle(substrate)
    logger.debug(f"2*theta={math.degrees(double_aperture):.4f} deg, critical={math.degrees(critical):.4f} deg")
    if double_aperture >= critical or double_aperture >= math.pi / 2.0:
        return HeightRange()
    return HeightRange(
        h_min=lateral_offset / math.tan(critical),
        h_max=lateral_offset / math.tan(double_aperture),
    )


def allowed_height(objective: ObjectiveSpec, substrate: SubstrateSpec, lateral_offset: float, height: float) -> bool:
    """Tell whether a light mounted at ``height`` satisfies both angular constraints."""
    span = light_height_range(objective, substrate, lateral_offset)
    return not span.is_empty and span.h_min < height < span.h_max
