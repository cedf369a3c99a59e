import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lidarcontrast.camera import (
    CameraCalibration,
    FeatureMap,
    fuse_levels,
    pool_cameras,
    pool_cameras_batch,
    project_point,
    project_points,
    sample_feature,
)


def simple_calib(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=100, height=100, extrinsics=None):
    intr = np.array([[fx, 0, cx], [0, fy, cy], [0, 0, 1.0]])
    ext = np.eye(4) if extrinsics is None else extrinsics
    return CameraCalibration(intr, ext, width, height)


def yawed_calib(yaw, **kwargs):
    c, s = math.cos(yaw), math.sin(yaw)
    ext = np.eye(4)
    ext[:3, :3] = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1.0]])
    return simple_calib(extrinsics=ext, **kwargs)


def grid_map(values, scale=1):
    data = np.asarray(values, dtype=np.float64)
    if data.ndim == 2:
        data = data[..., None]
    return FeatureMap(data.shape[0], data.shape[1], data.shape[2], scale, data)


# ---------------------------------------------------------------------------
# project_point
# ---------------------------------------------------------------------------


def test_optical_axis_maps_to_principal_point():
    loc = project_point((0, 0, 2.0), simple_calib())
    assert (loc.u, loc.v) == (50.0, 50.0)
    assert loc.depth_m == 2.0


def test_point_behind_camera_absent():
    assert project_point((0, 0, -1.0), simple_calib()) is None


def test_pinhole_arithmetic():
    loc = project_point((1.0, 0, 2.0), simple_calib(width=200))
    assert loc.u == pytest.approx(100.0, abs=1e-12)
    assert loc.v == pytest.approx(50.0, abs=1e-12)


def test_border_pixel_not_visible():
    # u = width exactly is outside the half-open bound
    calib = simple_calib(fx=50.0, cx=50.0, width=100)
    assert project_point((2.0, 0, 2.0), calib) is None
    assert project_point((1.999, 0, 2.0), calib) is not None


def test_calibration_validation():
    with pytest.raises(ValueError, match="not rigid"):
        bad = np.eye(4)
        bad[:3, :3] *= 2.0
        simple_calib(extrinsics=bad)
    with pytest.raises(ValueError):
        simple_calib(fx=-1.0)


@given(seed=st.integers(0, 2**31))
@settings(max_examples=60)
def test_project_unproject_roundtrip(seed):
    rng = np.random.default_rng(seed)
    calib = yawed_calib(float(rng.uniform(0, 2 * math.pi)))
    point = rng.uniform(-20, 20, 3)
    loc = project_point(point, calib)
    if loc is None:
        return
    ray = np.linalg.inv(calib.intrinsics) @ np.array([loc.u, loc.v, 1.0])
    cam = ray * loc.depth_m
    rot, t = calib.extrinsics[:3, :3], calib.extrinsics[:3, 3]
    back = rot.T @ (cam - t)
    np.testing.assert_allclose(back, point, atol=1e-9)


@given(lam=st.floats(0.1, 10.0), seed=st.integers(0, 2**31))
@settings(max_examples=60)
def test_pixel_invariant_along_ray(lam, seed):
    rng = np.random.default_rng(seed)
    calib = simple_calib()
    point = np.array([rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(1.0, 5.0)])
    a = project_point(point, calib)
    b = project_point(point * lam, calib)
    if a is None or b is None:
        return
    assert abs(a.u - b.u) <= 1e-9 and abs(a.v - b.v) <= 1e-9


def test_project_points_matches_scalar():
    rng = np.random.default_rng(5)
    calib = yawed_calib(0.7)
    pts = rng.uniform(-10, 10, size=(200, 3))
    u, v, depth, vis = project_points(pts, calib)
    for i in range(200):
        loc = project_point(pts[i], calib)
        assert vis[i] == (loc is not None)
        if loc is not None:
            assert (u[i], v[i], depth[i]) == (loc.u, loc.v, loc.depth_m)


# ---------------------------------------------------------------------------
# sample_feature
# ---------------------------------------------------------------------------


def test_sample_at_cell_center_exact():
    fmap = grid_map([[1.0, 2.0], [3.0, 4.0]], scale=4)
    # cell (1, 0) center sits at pixel ((0 + .5) * 4, (1 + .5) * 4)
    assert sample_feature(fmap, 2.0, 6.0)[0] == 3.0


def test_sample_geometric_center():
    fmap = grid_map([[0.0, 1.0], [2.0, 3.0]])
    assert sample_feature(fmap, 1.0, 1.0)[0] == pytest.approx(1.5, abs=1e-15)


def test_sample_outside_grid_errors():
    fmap = grid_map([[0.0, 1.0], [2.0, 3.0]])
    with pytest.raises(ValueError, match="outside feature grid"):
        sample_feature(fmap, 2.5, 1.0)
    with pytest.raises(ValueError, match="outside feature grid"):
        sample_feature(fmap, 0.4, 1.0)  # u_cell = -0.1


@given(u=st.floats(0.5, 3.5), v=st.floats(0.5, 3.5), seed=st.integers(0, 2**31))
@settings(max_examples=60)
def test_sample_within_neighbor_hull(u, v, seed):
    data = np.random.default_rng(seed).normal(size=(4, 4, 3))
    fmap = FeatureMap(4, 4, 3, 1, data)
    got = sample_feature(fmap, u, v)
    i0, j0 = int(u - 0.5), int(v - 0.5)
    block = data[max(j0 - 1, 0) : j0 + 2, max(i0 - 1, 0) : i0 + 2]
    corners = block.reshape(-1, 3)
    assert (got >= corners.min(axis=0) - 1e-12).all()
    assert (got <= corners.max(axis=0) + 1e-12).all()


# ---------------------------------------------------------------------------
# fuse_levels
# ---------------------------------------------------------------------------


def test_fuse_shapes():
    rng = np.random.default_rng(0)
    maps = [
        FeatureMap(4, 4, 8, 1, rng.normal(size=(4, 4, 8))),
        FeatureMap(2, 2, 16, 2, rng.normal(size=(2, 2, 16))),
        FeatureMap(1, 1, 32, 4, rng.normal(size=(1, 1, 32))),
    ]
    fused = fuse_levels(maps)
    assert (fused.height, fused.width, fused.channels, fused.scale) == (4, 4, 56, 1)


def test_fuse_single_map_identity():
    data = np.random.default_rng(1).normal(size=(3, 5, 2))
    fused = fuse_levels([FeatureMap(3, 5, 2, 2, data)])
    np.testing.assert_array_equal(fused.data, data)


def test_fuse_constant_coarse_stays_constant():
    fine = FeatureMap(4, 4, 1, 1, np.zeros((4, 4, 1)))
    coarse = FeatureMap(2, 2, 1, 2, np.full((2, 2, 1), 7.25))
    fused = fuse_levels([fine, coarse])
    np.testing.assert_array_equal(fused.data[..., 1], np.full((4, 4), 7.25))


def test_fuse_finest_passthrough_bitexact():
    rng = np.random.default_rng(2)
    fine = FeatureMap(8, 12, 3, 3, rng.normal(size=(8, 12, 3)))
    coarse = FeatureMap(4, 6, 2, 6, rng.normal(size=(4, 6, 2)))
    fused = fuse_levels([fine, coarse])
    np.testing.assert_array_equal(fused.data[..., :3], fine.data)


def test_fuse_rejects_mismatched_geometry():
    a = FeatureMap(4, 4, 1, 1, np.zeros((4, 4, 1)))
    b = FeatureMap(3, 3, 1, 2, np.zeros((3, 3, 1)))
    with pytest.raises(ValueError, match="geometry"):
        fuse_levels([a, b])


# ---------------------------------------------------------------------------
# pool_cameras
# ---------------------------------------------------------------------------


def test_pool_single_camera():
    calib = simple_calib(width=4, height=4, fx=2.0, fy=2.0, cx=2.0, cy=2.0)
    fmap = grid_map(np.arange(16, dtype=float).reshape(4, 4))
    got = pool_cameras((0.0, 0.0, 1.0), [calib], [fmap])
    expected = sample_feature(fmap, 2.0, 2.0)
    np.testing.assert_array_equal(got, expected)


def test_pool_two_cameras_mean():
    # two cameras (plain yaw extrinsics both look along +z) with constant maps
    a = yawed_calib(0.0, width=4, height=4, fx=2.0, fy=2.0, cx=2.0, cy=2.0)
    b = yawed_calib(math.pi, width=4, height=4, fx=2.0, fy=2.0, cx=2.0, cy=2.0)
    m1 = FeatureMap(4, 4, 2, 1, np.tile([1.0, 2.0], (4, 4, 1)))
    m2 = FeatureMap(4, 4, 2, 1, np.tile([3.0, 4.0], (4, 4, 1)))
    got = pool_cameras((0.0, 0.0, 1.0), [a, b], [m1, m2])
    np.testing.assert_allclose(got, [2.0, 3.0], rtol=0, atol=0)


def test_pool_invisible_everywhere():
    calib = simple_calib()
    fmap = grid_map(np.zeros((100, 100)))
    assert pool_cameras((0.0, 0.0, -5.0), [calib], [fmap]) is None


def test_pool_duplicated_camera_equals_single_sample():
    calib = simple_calib(width=8, height=8, fx=4.0, fy=4.0, cx=4.0, cy=4.0)
    data = np.random.default_rng(4).normal(size=(8, 8, 3))
    fmap = FeatureMap(8, 8, 3, 1, data)
    point = (0.3, -0.2, 2.0)
    single = pool_cameras(point, [calib], [fmap])
    doubled = pool_cameras(point, [calib, calib], [fmap, fmap])
    np.testing.assert_array_equal(single, doubled)


def test_pool_channel_mismatch_errors():
    calib = simple_calib(width=4, height=4, fx=2.0, fy=2.0, cx=2.0, cy=2.0)
    a = FeatureMap(4, 4, 2, 1, np.zeros((4, 4, 2)))
    b = FeatureMap(4, 4, 3, 1, np.zeros((4, 4, 3)))
    with pytest.raises(ValueError, match="channel"):
        pool_cameras((0, 0, 1.0), [calib, calib], [a, b])


def test_pool_batch_matches_scalar():
    rng = np.random.default_rng(9)
    calibs = [yawed_calib(0.0, width=16, height=16, fx=8.0, fy=8.0, cx=8.0, cy=8.0),
              yawed_calib(2.0, width=16, height=16, fx=8.0, fy=8.0, cx=8.0, cy=8.0)]
    maps = [FeatureMap(8, 8, 2, 2, rng.normal(size=(8, 8, 2))) for _ in range(2)]
    pts = rng.uniform(-3, 3, size=(120, 3))
    feats, seen = pool_cameras_batch(pts, calibs, maps)
    for i in range(120):
        single = pool_cameras(pts[i], calibs, maps)
        assert seen[i] == (single is not None)
        if single is not None:
            np.testing.assert_array_equal(feats[i], single)
