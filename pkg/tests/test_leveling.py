"""Tests for the leveling filter."""

import numpy as np
from pydantic import ValidationError
import pytest
from scipy.ndimage import maximum_filter, minimum_filter

from via_inspector.errors import DegenerateWeights
from via_inspector.leveling import (
    LevelingParams,
    default_leveling_params,
    depth_weight,
    metrology_leveling_params,
    level_depth,
    reference_depth,
    spatial_kernel,
)
from via_inspector.rasters import DepthMap
from via_inspector.synthetic import SceneSpec, ViaSpec, analytic_depth


@pytest.mark.parametrize("spatial_sigma, radius", [(2.0, 6), (1.0, 3), (0.2, 1), (1.1, 4)])
def test_default_window_radius(spatial_sigma, radius):
    """Test the window radius defaults to ceil(3 * spatial_sigma), at least 1."""
    assert LevelingParams(spatial_sigma=spatial_sigma, depth_sigma=1.0).window_radius == radius


@pytest.mark.parametrize(
    "kwargs",
    [
        {"spatial_sigma": 0.0, "depth_sigma": 1.0},
        {"spatial_sigma": 1.0, "depth_sigma": -1.0},
        {"spatial_sigma": 1.0, "depth_sigma": 1.0, "window_radius": 0},
        {"spatial_sigma": 1.0, "depth_sigma": 1.0, "mean_region": "floor"},
    ],
)
def test_invalid_params(kwargs):
    """Test nonpositive sigmas, zero radius and unknown regions are rejected."""
    with pytest.raises(ValidationError):
        LevelingParams(**kwargs)


def test_depth_weight_decreases_away_from_mean():
    """Test the weight is 1 at the mean and strictly decreasing in |z - mean|."""
    weights = depth_weight(np.array([2.0, 2.5, 3.0, 4.0]), mean=2.0, depth_sigma=1.0)
    assert weights[0] == 1.0
    assert np.all(np.diff(weights) < 0.0)
    assert depth_weight(1.0, mean=2.0, depth_sigma=1.0) == pytest.approx(weights[2])


def test_spatial_kernel_shape():
    """Test the window is (2r + 1) square with its peak in the middle."""
    kernel = spatial_kernel(1.5, 3)
    assert kernel.shape == (7, 7)
    assert kernel[3, 3] == 1.0
    assert kernel.argmax() == 24


def test_flat_map_stays_flat():
    """Test a constant map levels to zeros."""
    leveled = level_depth(DepthMap(z=np.full((12, 9), 4.2)), LevelingParams(spatial_sigma=1.0, depth_sigma=1.0))
    np.testing.assert_allclose(leveled.z, 0.0, atol=1e-12)


def test_spikes_far_from_mean_are_suppressed():
    """Test isolated spikes contribute almost nothing to their neighborhood."""
    z = np.zeros((24, 24))
    z[[3, 10, 17, 20], [5, 12, 8, 19]] = 5.0
    leveled = level_depth(DepthMap(z=z, pixel_pitch=0.5), LevelingParams(spatial_sigma=1.0, depth_sigma=1.0))
    assert leveled.z.max() < 0.05
    assert leveled.z.min() == 0.0
    assert leveled.pixel_pitch == 0.5


def test_single_spike_is_pulled_down():
    """Test a 9x9 zero map whose center sits at 100 depth sigmas comes out lower at the center."""
    z = np.zeros((9, 9))
    z[4, 4] = 100.0
    leveled = level_depth(DepthMap(z=z), LevelingParams(spatial_sigma=1.0, depth_sigma=1.0))
    assert leveled.z[4, 4] < z[4, 4]
    np.testing.assert_allclose(leveled.z, 0.0, atol=1e-9)


@pytest.mark.parametrize("axes", [(0,), (1,), (0, 1)])
def test_leveling_commutes_with_reflection(gentle_scene, axes):
    """Test mirroring the map before or after leveling gives the same result."""
    depth = analytic_depth(gentle_scene)
    z = depth.z + np.random.default_rng(6).normal(0.0, 0.1, depth.z.shape)
    params = LevelingParams(spatial_sigma=1.5, depth_sigma=3.0)
    mirrored_first = level_depth(DepthMap(z=np.flip(z, axis=axes), pixel_pitch=0.5), params).z
    mirrored_after = np.flip(level_depth(DepthMap(z=z, pixel_pitch=0.5), params).z, axis=axes)
    np.testing.assert_allclose(mirrored_first, mirrored_after, atol=1e-12)


def test_via_depth_is_preserved(gentle_scene):
    """Test leveling keeps the via floor and the wafer surface apart."""
    depth = analytic_depth(gentle_scene)
    leveled = level_depth(depth, default_leveling_params(depth))
    assert leveled.peak_to_valley == pytest.approx(depth.peak_to_valley, rel=0.02)
    assert leveled.z[64, 64] == pytest.approx(0.0, abs=1e-6)


def test_vanishing_weights_raise():
    """Test a depth sigma far below every deviation from the mean raises DegenerateWeights."""
    z = np.zeros((8, 8))
    z[::2, ::2] = 100.0
    z[1::2, 1::2] = 100.0
    with pytest.raises(DegenerateWeights):
        level_depth(DepthMap(z=z), LevelingParams(spatial_sigma=1.0, depth_sigma=1e-3))


def test_reference_depth_regions():
    """Test the surface region averages only the upper half of the depths."""
    z = np.array([[0.0, -1.0], [-10.0, -2.0]])
    assert reference_depth(z, "full") == -3.25
    assert reference_depth(z, "surface") == -0.5


def test_default_params_scale_with_depth():
    """Test the default depth sigma is a fraction of the peak-to-valley."""
    params = default_leveling_params(DepthMap(z=[[0.0, -40.0]]))
    assert params.depth_sigma == pytest.approx(4.0)
    assert params.spatial_sigma == 2.0
    assert default_leveling_params(DepthMap(z=[[1.0, 1.0]])).depth_sigma == 1.0


def test_output_stays_within_window_range(gentle_scene):
    """Test every leveled pixel lies between the extremes of its input window."""
    depth = analytic_depth(gentle_scene)
    params = LevelingParams(spatial_sigma=2.0, depth_sigma=1.0)
    # the floor holds the global minimum, so the shift is the floor depth
    raw = level_depth(depth, params).z - gentle_scene.vias[0].depth
    size = 2 * params.window_radius + 1
    assert np.all(raw >= minimum_filter(depth.z, size=size, mode="nearest") - 1e-9)
    assert np.all(raw <= maximum_filter(depth.z, size=size, mode="nearest") + 1e-9)


def test_edge_noise_is_reduced():
    """Test leveling brings a wall-noisy via map closer to its clean version."""
    via = ViaSpec(center=(16.5, 16.5), radius_top=14.0, radius_bottom=8.0, depth=1.5)
    clean = analytic_depth(SceneSpec(vias=[via], width=33, height=33)).z
    wall = (clean > -1.5) & (clean < 0.0)
    noisy = clean.copy()
    noisy[wall] += np.random.default_rng(8).uniform(-0.5, 0.5, int(wall.sum()))
    leveled = level_depth(DepthMap(z=noisy), LevelingParams(spatial_sigma=1.0, depth_sigma=5.0)).z
    before = np.sqrt(np.mean((noisy - clean) ** 2))
    after = np.sqrt(np.mean((leveled - (clean - clean.min())) ** 2))
    assert after < before


def test_metrology_params_keep_walls():
    """Test the metrology defaults use one pixel and the full peak-to-valley, and keep the 10 % outline in place."""
    via = ViaSpec(center=(32.0, 32.0), radius_top=20.0, radius_bottom=14.0, depth=24.0)
    depth = analytic_depth(SceneSpec(vias=[via], width=128, height=128, pixel_pitch=0.5))
    params = metrology_leveling_params(depth)
    assert params.spatial_sigma == 1.0
    assert params.depth_sigma == pytest.approx(24.0)
    leveled = level_depth(depth, params)
    row = leveled.z[64, :64] - leveled.z[64, 0]
    raw = depth.z[64, :64]
    level = -2.4
    assert np.argmax(row < level) == np.argmax(raw < level)
