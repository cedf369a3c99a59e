"""Camera-LiDAR correspondence.

Pinhole projection with visibility filtering, bilinear feature sampling,
multi-level feature fusion, and multi-camera average pooling. Feature-grid
coordinates follow u_cell = u/scale - 0.5, i.e. grid cells are centered on
the pixel centers of the downsampled image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class CameraCalibration:
    intrinsics: np.ndarray  # (3, 3) pinhole, zero skew
    extrinsics: np.ndarray  # (4, 4) rigid lidar->camera (x right, y down, z fwd)
    image_width: int
    image_height: int

    def __post_init__(self):
        self.intrinsics = np.ascontiguousarray(self.intrinsics, dtype=np.float64)
        self.extrinsics = np.ascontiguousarray(self.extrinsics, dtype=np.float64)
        if self.intrinsics.shape != (3, 3) or self.extrinsics.shape != (4, 4):
            raise ValueError("intrinsics must be 3x3 and extrinsics 4x4")
        k = self.intrinsics
        if k[0, 0] <= 0 or k[1, 1] <= 0:
            raise ValueError("focal lengths must be positive")
        if k[0, 1] != 0 or k[1, 0] != 0 or not np.array_equal(k[2], [0.0, 0.0, 1.0]):
            raise ValueError("intrinsics must be zero-skew pinhole")
        rot = self.extrinsics[:3, :3]
        if np.abs(rot.T @ rot - np.eye(3)).max() > 1e-9 or np.linalg.det(rot) < 0:
            raise ValueError("extrinsics not rigid")
        if not np.array_equal(self.extrinsics[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError("extrinsics bottom row must be [0, 0, 0, 1]")
        if self.image_width < 1 or self.image_height < 1:
            raise ValueError("image dimensions must be positive")


@dataclass
class FeatureMap:
    """Dense feature grid at 1/scale of the source image resolution."""

    height: int
    width: int
    channels: int
    scale: int
    data: np.ndarray  # (height, width, channels) float64

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)
        if self.data.shape != (self.height, self.width, self.channels):
            raise ValueError("data shape must match (height, width, channels)")
        if self.height < 1 or self.width < 1 or self.channels < 1 or self.scale < 1:
            raise ValueError("feature map dimensions must be positive")
        if self.data.size and not np.isfinite(self.data).all():
            raise ValueError("non-finite feature values")


@dataclass
class PixelLocation:
    camera_index: int
    u: float
    v: float
    depth_m: float


def project_point(point, calib: CameraCalibration, camera_index: int = 0) -> PixelLocation | None:
    """Project one LiDAR-frame point; None when behind the camera or
    outside the image (bounds are half-open: u = width is not visible)."""
    p = np.asarray(point, dtype=np.float64).reshape(1, 3)
    u, v, depth, visible = project_points(p, calib)
    if not visible[0]:
        return None
    return PixelLocation(camera_index, float(u[0]), float(v[0]), float(depth[0]))


def project_points(points: np.ndarray, calib: CameraCalibration):
    """Vectorized projection: (u, v) pixels, depths, and visibility mask.

    Uses explicit elementwise arithmetic (no matmul) so results are
    bit-identical regardless of batch size or BLAS backend.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rot, t = calib.extrinsics[:3, :3], calib.extrinsics[:3, 3]
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    cx = rot[0, 0] * x + rot[0, 1] * y + rot[0, 2] * z + t[0]
    cy = rot[1, 0] * x + rot[1, 1] * y + rot[1, 2] * z + t[1]
    depth = rot[2, 0] * x + rot[2, 1] * y + rot[2, 2] * z + t[2]
    k = calib.intrinsics
    safe = np.where(depth > 0, depth, 1.0)
    u = k[0, 0] * (cx / safe) + k[0, 2]
    v = k[1, 1] * (cy / safe) + k[1, 2]
    visible = (
        (depth > 0)
        & (u >= 0.0)
        & (u < calib.image_width)
        & (v >= 0.0)
        & (v < calib.image_height)
    )
    return u, v, depth, visible


def _bilinear(data: np.ndarray, v_cell, u_cell) -> np.ndarray:
    """Bilinear lookup at fractional cell coordinates (vectorized)."""
    h, w = data.shape[:2]
    vc = np.asarray(v_cell, dtype=np.float64)
    uc = np.asarray(u_cell, dtype=np.float64)
    i0 = np.clip(np.floor(vc).astype(np.intp), 0, max(h - 2, 0))
    j0 = np.clip(np.floor(uc).astype(np.intp), 0, max(w - 2, 0))
    i1 = np.minimum(i0 + 1, h - 1)
    j1 = np.minimum(j0 + 1, w - 1)
    fv = (vc - i0)[..., None]
    fu = (uc - j0)[..., None]
    top = data[i0, j0] * (1.0 - fu) + data[i0, j1] * fu
    bot = data[i1, j0] * (1.0 - fu) + data[i1, j1] * fu
    return top * (1.0 - fv) + bot * fv


def cell_coords(fmap: FeatureMap, u, v) -> tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates -> fractional feature-grid coordinates."""
    return np.asarray(u) / fmap.scale - 0.5, np.asarray(v) / fmap.scale - 0.5


def sample_feature(fmap: FeatureMap, u: float, v: float) -> np.ndarray:
    """Bilinearly sample the feature vector at pixel (u, v)."""
    uc, vc = cell_coords(fmap, u, v)
    if not (0.0 <= uc <= fmap.width - 1 and 0.0 <= vc <= fmap.height - 1):
        raise ValueError("pixel outside feature grid")
    return _bilinear(fmap.data, vc, uc)


def fuse_levels(maps: list[FeatureMap]) -> FeatureMap:
    """Upsample all levels to the finest grid and concatenate channels.

    Inputs must be ordered finest first, with every scale an integer
    multiple of the finest, and all levels covering the same image. The
    finest level passes through bit-exactly as the leading channels.
    """
    if not maps:
        raise ValueError("need at least one feature map")
    fine = maps[0]
    img_w, img_h = fine.width * fine.scale, fine.height * fine.scale
    for m in maps:
        if m.width * m.scale != img_w or m.height * m.scale != img_h:
            raise ValueError("mismatched camera geometry across levels")
        if m.scale % fine.scale != 0:
            raise ValueError("scales must be integer multiples of the finest")
    if any(b.scale <= a.scale for a, b in zip(maps, maps[1:])):
        raise ValueError("maps must be ordered by strictly increasing scale")

    px = (np.arange(fine.width) + 0.5) * fine.scale
    py = (np.arange(fine.height) + 0.5) * fine.scale
    parts = []
    for m in maps:
        uc = np.clip(px / m.scale - 0.5, 0.0, m.width - 1)
        vc = np.clip(py / m.scale - 0.5, 0.0, m.height - 1)
        ug, vg = np.meshgrid(uc, vc)
        parts.append(_bilinear(m.data, vg, ug))
    fused = np.concatenate(parts, axis=-1)
    return FeatureMap(fine.height, fine.width, fused.shape[-1], fine.scale, fused)


def _check_camera_map(calib: CameraCalibration, fmap: FeatureMap):
    if (
        fmap.width * fmap.scale != calib.image_width
        or fmap.height * fmap.scale != calib.image_height
    ):
        raise ValueError("feature map does not cover the camera image")


def pool_cameras(
    point, calibs: list[CameraCalibration], maps: list[FeatureMap]
) -> np.ndarray | None:
    """Mean feature over every camera that sees the point; None if unseen.

    Cell coordinates are clamped to the grid, so pixels within half a cell
    of the image border sample the border cells (border replication).
    """
    if len(calibs) != len(maps):
        raise ValueError("calibs and maps must align by camera index")
    if len({m.channels for m in maps}) > 1:
        raise ValueError("channel-count mismatch across cameras")
    feats = []
    for idx, (calib, fmap) in enumerate(zip(calibs, maps)):
        _check_camera_map(calib, fmap)
        loc = project_point(point, calib, idx)
        if loc is None:
            continue
        uc, vc = cell_coords(fmap, loc.u, loc.v)
        uc = min(max(uc, 0.0), fmap.width - 1)
        vc = min(max(vc, 0.0), fmap.height - 1)
        feats.append(_bilinear(fmap.data, vc, uc))
    if not feats:
        return None
    return np.mean(feats, axis=0)


def pool_cameras_batch(
    points: np.ndarray, calibs: list[CameraCalibration], maps: list[FeatureMap]
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized pool_cameras over N points.

    Returns (features (N, C), visible (N,)); rows of unseen points are
    zero. Matches pool_cameras on every visible point.
    """
    if len(calibs) != len(maps):
        raise ValueError("calibs and maps must align by camera index")
    if len({m.channels for m in maps}) > 1:
        raise ValueError("channel-count mismatch across cameras")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n, c = pts.shape[0], maps[0].channels if maps else 0
    total = np.zeros((n, c))
    count = np.zeros(n)
    for calib, fmap in zip(calibs, maps):
        _check_camera_map(calib, fmap)
        u, v, _, vis = project_points(pts, calib)
        if not vis.any():
            continue
        uc, vc = cell_coords(fmap, u[vis], v[vis])
        uc = np.clip(uc, 0.0, fmap.width - 1)
        vc = np.clip(vc, 0.0, fmap.height - 1)
        total[vis] += _bilinear(fmap.data, vc, uc)
        count[vis] += 1.0
    seen = count > 0
    total[seen] /= count[seen, None]
    return total, seen
