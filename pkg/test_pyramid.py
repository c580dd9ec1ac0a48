"""
Tests for depth pyramids and integral-image normals.

Verifies:
- Back-projection matches the pinhole model
- Normals of planar surfaces point at the camera
- Depth discontinuities leave pixels without normals
- Downsampling takes the lower median of valid children
- Level sizes and intrinsics halve correctly
"""

import math

import numpy as np
import pytest

from app.bench.base import render_depth
from app.errors import BadIntrinsics
from app.geom import RigidTransform
from app.models import PlaneSpec, SceneSpec
from app.pyramid import (
    DepthImage,
    Intrinsics,
    backproject,
    build_pyramid,
    downsample_depth,
    estimate_normals,
)


def constant_depth(intrinsics, value=2.0) -> DepthImage:
    return DepthImage(np.full((intrinsics.height, intrinsics.width), value), intrinsics)


def test_backproject_pinhole(intrinsics):
    depth = constant_depth(intrinsics, 2.0)
    depth.depths[10, 20] = 3.0
    cloud = backproject(depth)

    expected = np.array([(20 - 39.5) / 65.625 * 3.0, (10 - 29.5) / 65.625 * 3.0, 3.0])
    np.testing.assert_allclose(cloud.points[10, 20], expected, atol=1e-12)
    assert cloud.valid.all()


def test_backproject_marks_missing_depth(intrinsics):
    depth = constant_depth(intrinsics)
    depth.depths[0, 0] = 0.0
    depth.depths[0, 1] = np.nan
    depth.depths[0, 2] = 7.0  # beyond depth_max
    cloud = backproject(depth)
    assert not cloud.valid[0, :3].any()
    np.testing.assert_array_equal(cloud.points[0, 0], [0.0, 0.0, 0.0])


def test_bad_intrinsics_rejected():
    bad = Intrinsics(8, 6, 0.0, 10.0, 4.0, 3.0)
    with pytest.raises(BadIntrinsics):
        backproject(DepthImage(np.ones((6, 8)), bad))


def test_depth_shape_must_match(intrinsics):
    with pytest.raises(ValueError):
        DepthImage(np.ones((10, 10)), intrinsics)
    flat = DepthImage(np.ones(intrinsics.width * intrinsics.height), intrinsics)
    assert flat.depths.shape == (intrinsics.height, intrinsics.width)


def test_fronto_parallel_normals(intrinsics):
    cloud = estimate_normals(backproject(constant_depth(intrinsics)), half_window=3)
    assert cloud.normal_valid.sum() == (intrinsics.height - 6) * (intrinsics.width - 6)
    np.testing.assert_allclose(cloud.normals[cloud.normal_valid], [[0.0, 0.0, -1.0]] * int(cloud.normal_valid.sum()), atol=1e-9)
    assert not cloud.normal_valid[:3].any()


def test_tilted_plane_normals(intrinsics):
    angle = math.radians(30.0)
    true_normal = np.array([math.sin(angle), 0.0, -math.cos(angle)])
    scene = SceneSpec(name="tilted", planes=[PlaneSpec(point=(0.0, 0.0, 2.5), normal=tuple(true_normal), extent=20.0)])
    depth = render_depth(scene, RigidTransform.identity(), intrinsics)

    cloud = estimate_normals(backproject(depth), half_window=3)
    normals = cloud.normals[cloud.normal_valid]
    assert len(normals) > 1000
    errors = np.degrees(np.arccos(np.clip(normals @ true_normal, -1.0, 1.0)))
    assert errors.max() < 1.0


def test_depth_step_invalidates_normals(intrinsics):
    depths = np.full((intrinsics.height, intrinsics.width), 1.0)
    depths[:, 40:] = 2.0
    cloud = estimate_normals(backproject(DepthImage(depths, intrinsics)), half_window=3)

    assert not cloud.normal_valid[:, 37:43].any()
    assert cloud.normal_valid[10:50, 10:30].all()
    assert cloud.normal_valid[10:50, 50:70].all()


def test_missing_pixel_invalidates_window(intrinsics):
    depth = constant_depth(intrinsics)
    depth.depths[30, 40] = 0.0
    cloud = estimate_normals(backproject(depth), half_window=2)
    assert not cloud.normal_valid[28:33, 38:43].any()
    assert cloud.normal_valid[30, 45]


def test_downsample_lower_median():
    depths = np.array([
        [1.0, 2.0, 0.0, 2.0],
        [3.0, 4.0, np.nan, 5.0],
        [0.0, 0.0, 6.0, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ])
    np.testing.assert_array_equal(downsample_depth(depths), [[2.0, 2.0], [0.0, 6.0]])


def test_downsample_odd_size():
    out = downsample_depth(np.full((5, 3), 1.5))
    assert out.shape == (3, 2)
    np.testing.assert_array_equal(out, np.full((3, 2), 1.5))


def test_pyramid_sizes_and_intrinsics():
    kinect = Intrinsics(640, 480, 525.0, 525.0, 319.5, 239.5)
    pyramid = build_pyramid(constant_depth(kinect), levels=3)

    assert len(pyramid) == 3
    assert [(c.width, c.height) for c in pyramid.levels] == [(640, 480), (320, 240), (160, 120)]
    assert pyramid[1].intrinsics.fx == 262.5
    assert pyramid[1].intrinsics.cx == 159.5
    assert pyramid[2].intrinsics.cx == 79.5
    np.testing.assert_allclose(pyramid[2].depths[pyramid[2].valid], 2.0)


def test_pyramid_level_count_validated(intrinsics):
    with pytest.raises(ValueError):
        build_pyramid(constant_depth(intrinsics), levels=0)


def test_pyramid_of_scene_has_normals_everywhere(corner_depth):
    pyramid = build_pyramid(corner_depth, levels=3, half_window=5)
    for cloud in pyramid.levels:
        assert cloud.normal_valid.any()
        assert not (cloud.normal_valid & ~cloud.valid).any()
