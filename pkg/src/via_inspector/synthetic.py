"""Synthetic via scenes with closed-form depth and normals, rendered under a Lambertian model."""

from itertools import combinations
import math
from typing import Literal, Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat, PositiveInt, model_validator

from via_inspector.errors import InvalidParameter, OverlappingVias
from via_inspector.logger import logger
from via_inspector.rasters import DepthMap, GradientField, ImageStack, LightSet, NormalField, pixel_centers


RIM_HARMONICS = 8
MAX_WALL_ANGLE_DEG = 85.0
VERTICAL_WIDTH = 1e-9
HORIZON_SAMPLES = 32


class ViaSpec(BaseModel):
    """
    Parametric blind via.

    Attributes
    ----------
    center : tuple of float
        ``(x, y)`` of the via axis in micrometers.
    radius_top, radius_bottom : float
        Rim and floor radii in micrometers.
    depth : float
        Floor depth below the wafer surface in micrometers.
    wall_profile : {"straight-taper", "cosine-rounded-rim"}
        Linear wall, or a cosine blend flat at both floor and rim.
    rim_noise_amplitude : float
        Largest azimuthal deviation of the rim radius in micrometers.
    rim_noise_seed : int
        Seed of the rim harmonics.

    """

    center: tuple[float, float]
    radius_top: PositiveFloat
    radius_bottom: PositiveFloat
    depth: PositiveFloat
    wall_profile: Literal["straight-taper", "cosine-rounded-rim"] = "straight-taper"
    rim_noise_amplitude: NonNegativeFloat = 0.0
    rim_noise_seed: int = 0

    model_config = ConfigDict(extra="forbid", frozen=True)

    @model_validator(mode="after")
    def _check_radii(self) -> Self:
        if self.radius_top < self.radius_bottom:
            raise ValueError(f"radius_top {self.radius_top} must be >= radius_bottom {self.radius_bottom}")
        return self

    @property
    def outer_radius(self) -> float:
        """Largest radius the rim can reach."""
        return self.radius_top + self.rim_noise_amplitude


class SceneSpec(BaseModel):
    """A raster holding zero or more vias on a flat wafer of uniform albedo."""

    name: str = "scene"
    vias: list[ViaSpec] = Field(default_factory=list)
    width: PositiveInt
    height: PositiveInt
    pixel_pitch: PositiveFloat = 1.0
    albedo: float = Field(default=1.0, gt=0.0, le=1.0)
    noise_sigma: NonNegativeFloat = 0.0
    shadow_model: Literal["none", "horizon"] = "none"

    model_config = ConfigDict(extra="forbid", frozen=True)


def check_overlaps(scene: SceneSpec) -> None:
    """Raise :class:`OverlappingVias` if two rims, rim noise included, can touch."""
    for (i, first), (j, second) in combinations(enumerate(scene.vias), 2):
        gap = math.dist(first.center, second.center)
        if gap < first.outer_radius + second.outer_radius:
            raise OverlappingVias(f"vias {i} and {j} overlap: centers {gap:.4g} um apart")


def _rim(via: ViaSpec, phi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rim radius and its azimuthal derivative."""
    if via.rim_noise_amplitude == 0.0:
        return np.full_like(phi, via.radius_top), np.zeros_like(phi)
    coefficients = np.random.default_rng(via.rim_noise_seed).normal(size=(2, RIM_HARMONICS))
    coefficients *= via.rim_noise_amplitude / np.abs(coefficients).sum()
    orders = np.arange(1, RIM_HARMONICS + 1)
    angles = phi[..., None] * orders
    radius = via.radius_top + (coefficients[0] * np.cos(angles) + coefficients[1] * np.sin(angles)).sum(axis=-1)
    slope = (orders * (coefficients[1] * np.cos(angles) - coefficients[0] * np.sin(angles))).sum(axis=-1)
    return np.maximum(radius, via.radius_bottom), slope


def _via_surface(via: ViaSpec, x: np.ndarray, y: np.ndarray, pixel_pitch: float) -> dict[str, np.ndarray]:
    """Closed-form height, slopes and vertical-wall band of one via at the given points."""
    dx = x - via.center[0]
    dy = y - via.center[1]
    r = np.hypot(dx, dy)
    rim, rim_slope = _rim(via, np.arctan2(dy, dx))
    width = rim - via.radius_bottom

    z = np.where(r <= via.radius_bottom, -via.depth, 0.0)
    p = np.zeros_like(r)
    q = np.zeros_like(r)

    wall = (width > VERTICAL_WIDTH) & (r > via.radius_bottom) & (r < rim)
    rw, dxw, dyw, ww = r[wall], dx[wall], dy[wall], width[wall]
    t = (rw - via.radius_bottom) / ww
    if via.wall_profile == "straight-taper":
        z[wall] = -via.depth * (1.0 - t)
        dz_dt = np.full_like(t, via.depth)
    else:
        z[wall] = -via.depth * (1.0 + np.cos(np.pi * t)) / 2.0
        dz_dt = via.depth * np.pi * np.sin(np.pi * t) / 2.0
    # t depends on the azimuth through the rim radius
    dt_dx = dxw / (rw * ww) + t * rim_slope[wall] * dyw / (rw**2 * ww)
    dt_dy = dyw / (rw * ww) - t * rim_slope[wall] * dxw / (rw**2 * ww)
    p[wall] = dz_dt * dt_dx
    q[wall] = dz_dt * dt_dy

    vertical = (width <= VERTICAL_WIDTH) & (np.abs(r - rim) <= pixel_pitch * math.sqrt(0.5))
    return {"z": z, "p": p, "q": q, "vertical": vertical, "dx": dx, "dy": dy, "r": r}


def _scene_surface(scene: SceneSpec) -> dict[str, np.ndarray]:
    check_overlaps(scene)
    x, y = pixel_centers(scene.height, scene.width, scene.pixel_pitch)
    shape = (scene.height, scene.width)
    surface = {
        "z": np.zeros(shape),
        "p": np.zeros(shape),
        "q": np.zeros(shape),
        "vertical": np.zeros(shape, dtype=bool),
        "inward": np.zeros((*shape, 2)),
    }
    for via in scene.vias:
        fields = _via_surface(via, x, y, scene.pixel_pitch)
        surface["z"] += fields["z"]
        surface["p"] += fields["p"]
        surface["q"] += fields["q"]
        vertical = fields["vertical"]
        surface["vertical"] |= vertical
        radius = fields["r"][vertical][:, None]
        surface["inward"][vertical] = -np.column_stack([fields["dx"][vertical], fields["dy"][vertical]]) / radius
    return surface


def _steep(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.hypot(p, q) > math.tan(math.radians(MAX_WALL_ANGLE_DEG))


def analytic_depth(scene: SceneSpec) -> DepthMap:
    """
    Return the closed-form height map: 0 on the wafer, ``-depth`` on via floors.

    Raises
    ------
    OverlappingVias
        If two vias overlap.

    """
    return DepthMap(z=_scene_surface(scene)["z"], pixel_pitch=scene.pixel_pitch)


def analytic_gradients(scene: SceneSpec) -> GradientField:
    """Return the exact slopes, masking walls steeper than 85 degrees and vertical walls."""
    surface = _scene_surface(scene)
    mask = ~(surface["vertical"] | _steep(surface["p"], surface["q"]))
    return GradientField(p=np.where(mask, surface["p"], 0.0), q=np.where(mask, surface["q"], 0.0), mask=mask)


def analytic_normals(scene: SceneSpec) -> NormalField:
    """
    Return the unit normals ``(-p, -q, 1) / ||.||`` of the closed-form surface.

    Walls steeper than 85 degrees from horizontal, including vertical
    cylinder walls, are masked: photometric stereo cannot recover them.
    """
    grad = analytic_gradients(scene)
    normals = np.stack([-grad.p, -grad.q, np.ones_like(grad.p)], axis=-1)
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    return NormalField(normals=normals, albedo=np.where(grad.mask, scene.albedo, 0.0), mask=grad.mask)


def _render_normals(surface: dict[str, np.ndarray]) -> np.ndarray:
    normals = np.stack([-surface["p"], -surface["q"], np.ones_like(surface["p"])], axis=-1)
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    vertical = surface["vertical"]
    normals[vertical] = np.column_stack([surface["inward"][vertical], np.zeros(int(vertical.sum()))])
    return normals


def _horizon_shadow(scene: SceneSpec, direction: np.ndarray, z: np.ndarray) -> np.ndarray:
    """
    Flag via pixels whose ray toward the light passes under the via's own wall.

    The ray is sampled horizontally from the pixel to the outer rim circle and
    compared with the closed-form height of the same via.
    """
    shadow = np.zeros(z.shape, dtype=bool)
    horizontal = math.hypot(direction[0], direction[1])
    if horizontal < 1e-12:
        return shadow
    heading = direction[:2] / horizontal
    rise = direction[2] / horizontal
    x, y = pixel_centers(scene.height, scene.width, scene.pixel_pitch)
    for via in scene.vias:
        dx = x - via.center[0]
        dy = y - via.center[1]
        inside = np.hypot(dx, dy) < via.outer_radius
        if not np.any(inside):
            continue
        dxi, dyi, zi = dx[inside], dy[inside], z[inside]
        along = dxi * heading[0] + dyi * heading[1]
        exit_distance = -along + np.sqrt(np.maximum(along**2 - (dxi**2 + dyi**2) + via.outer_radius**2, 0.0))
        steps = np.arange(1, HORIZON_SAMPLES + 1) / HORIZON_SAMPLES
        travel = exit_distance[:, None] * steps
        sample_x = via.center[0] + dxi[:, None] + travel * heading[0]
        sample_y = via.center[1] + dyi[:, None] + travel * heading[1]
        terrain = _via_surface(via, sample_x, sample_y, scene.pixel_pitch)["z"]
        ray = zi[:, None] + travel * rise
        shadow[inside] = np.any(ray < terrain - 1e-9 * via.depth, axis=1)
    return shadow


def render_scene(scene: SceneSpec, lights: LightSet, seed: int = 0) -> ImageStack:
    """
    Render one Lambertian frame per light.

    Each pixel gets ``albedo * max(0, n . l)`` from its analytic normal.
    With the horizon shadow model, via pixels whose path to the light is
    blocked by the via wall are set to 0. Gaussian noise of
    ``scene.noise_sigma`` is then added and the result clipped to [0, 1].

    Parameters
    ----------
    scene : SceneSpec
        Scene to render.
    lights : LightSet
        Illumination directions.
    seed : int
        Seed of the intensity noise.

    Returns
    -------
    ImageStack
        Frames in light order, same pitch as the scene.

    Raises
    ------
    OverlappingVias
        If two vias overlap.

    """
    surface = _scene_surface(scene)
    normals = _render_normals(surface)
    frames = scene.albedo * np.clip(np.einsum("hwc,kc->khw", normals, lights.directions), 0.0, None)
    if scene.shadow_model == "horizon":
        for index, direction in enumerate(lights.directions):
            frames[index][_horizon_shadow(scene, direction, surface["z"])] = 0.0
    if scene.noise_sigma > 0.0:
        rng = np.random.default_rng(seed)
        frames = np.clip(frames + rng.normal(0.0, scene.noise_sigma, frames.shape), 0.0, 1.0)
    logger.debug(
        f"Rendered scene '{scene.name}' ({len(scene.vias)} vias) under {lights.count} lights, "
        f"noise {scene.noise_sigma}, shadows {scene.shadow_model}"
    )
    return ImageStack(frames=frames, pixel_pitch=scene.pixel_pitch)


def ring_lights(ring_count: int, polar_deg: float = 45.0, zenith: bool = True) -> LightSet:
    """
    Build a ring of evenly spaced lights, optionally with a zenith light first.

    ``ring_lights(6)`` is the seven-light layout and ``ring_lights(4)`` the
    five-light one.
    """
    if ring_count < 0 or not 0.0 <= polar_deg < 90.0:
        raise InvalidParameter(f"need ring_count >= 0 and 0 <= polar_deg < 90, got {ring_count}, {polar_deg}")
    polar = math.radians(polar_deg)
    azimuths = 2.0 * np.pi * np.arange(ring_count) / ring_count if ring_count else np.empty(0)
    ring = np.column_stack(
        [
            math.sin(polar) * np.cos(azimuths),
            math.sin(polar) * np.sin(azimuths),
            np.full(ring_count, math.cos(polar)),
        ]
    )
    directions = np.vstack([[[0.0, 0.0, 1.0]], ring]) if zenith else ring
    return LightSet(directions=directions)


def default_scene_suite() -> list[SceneSpec]:
    """Return the three-via synthetic suite: two etched tapers and one laser-drilled via with a rough rim."""
    raster = {"width": 128, "height": 128, "pixel_pitch": 0.5, "albedo": 0.8}
    return [
        SceneSpec(
            name="tsv-taper",
            vias=[ViaSpec(center=(32.0, 32.0), radius_top=20.0, radius_bottom=14.0, depth=24.0)],
            **raster,
        ),
        SceneSpec(
            name="tsv-rounded",
            vias=[
                ViaSpec(
                    center=(32.0, 32.0),
                    radius_top=18.0,
                    radius_bottom=10.0,
                    depth=16.0,
                    wall_profile="cosine-rounded-rim",
                )
            ],
            **raster,
        ),
        SceneSpec(
            name="tgv-rough-rim",
            vias=[
                ViaSpec(
                    center=(32.0, 32.0),
                    radius_top=22.0,
                    radius_bottom=14.0,
                    depth=20.0,
                    rim_noise_amplitude=1.0,
                    rim_noise_seed=7,
                )
            ],
            **raster,
        ),
    ]


def nominal_diameter(via: ViaSpec, level_fraction: float = 0.1) -> float:
    """Diameter of the noise-free wall at ``level_fraction * depth`` below the surface."""
    if not 0.0 < level_fraction < 1.0:
        raise InvalidParameter(f"level_fraction must lie in (0, 1), got {level_fraction}")
    if via.wall_profile == "straight-taper":
        t = 1.0 - level_fraction
    else:
        t = math.acos(2.0 * level_fraction - 1.0) / math.pi
    return 2.0 * (via.radius_bottom + t * (via.radius_top - via.radius_bottom))
