"""Pytest configuration and shared fixtures: light layouts and synthetic via scenes."""

import logging

import pytest

from via_inspector.synthetic import SceneSpec, ViaSpec, ring_lights


@pytest.fixture(autouse=True, scope="session")
def quiet_via_inspector_logging():
    """Keep the package logger at INFO during tests to reduce noise."""
    logging.getLogger("via_inspector").setLevel(logging.INFO)
    yield


@pytest.fixture
def seven_lights():
    """Zenith light plus a ring of six lights at 45 degrees."""
    return ring_lights(6)


@pytest.fixture
def five_lights():
    """Zenith light plus a ring of four lights at 45 degrees."""
    return ring_lights(4)


@pytest.fixture
def taper_scene():
    """Steep straight-taper via, 25 to 23 um radius and 50 um deep, on 256x256 pixels of 0.5 um."""
    return SceneSpec(
        name="taper",
        vias=[ViaSpec(center=(64.0, 64.0), radius_top=25.0, radius_bottom=23.0, depth=50.0)],
        width=256,
        height=256,
        pixel_pitch=0.5,
        albedo=0.8,
    )


@pytest.fixture
def gentle_scene():
    """Shallow 45 degree via on a small raster, fast enough for CLI round trips."""
    return SceneSpec(
        name="gentle",
        vias=[ViaSpec(center=(32.0, 32.0), radius_top=20.0, radius_bottom=10.0, depth=10.0)],
        width=128,
        height=128,
        pixel_pitch=0.5,
        albedo=0.8,
    )


@pytest.fixture
def slice_scene():
    """Straight-taper via 30 to 20 um and 20 um deep, wafer surface covering most of the raster."""
    return SceneSpec(
        name="slices",
        vias=[ViaSpec(center=(40.0, 40.0), radius_top=30.0, radius_bottom=20.0, depth=20.0)],
        width=160,
        height=160,
        pixel_pitch=0.5,
        albedo=0.8,
    )
