"""Synthetic labeled scenes with virtual cameras and feature maps.

A flat ground plane plus boxy vehicles, cylindrical pedestrians, and wall
slabs, sampled with a 1/range^2 density falloff. Virtual cameras ring the
origin; per-camera feature maps are rendered by splatting a fixed random
unit embedding per class into the pixel grid (nearest point wins), which
stands in for a frozen self-supervised image backbone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import CameraCalibration, FeatureMap, fuse_levels, project_points
from .geom import PointCloud

CLASS_GROUND = 0
CLASS_VEHICLE = 1
CLASS_PEDESTRIAN = 2
CLASS_WALL = 3
CLASS_NAMES = ("ground", "vehicle", "pedestrian", "wall")

_INTENSITY_BASE = {CLASS_GROUND: 0.25, CLASS_VEHICLE: 0.75, CLASS_PEDESTRIAN: 0.55, CLASS_WALL: 0.4}
_MIN_RANGE_M = 2.0  # lidar blind zone around the ego
_REFERENCE_RANGE_M = 10.0

IMAGE_WIDTH = 640
IMAGE_HEIGHT = 480
CAMERA_HEIGHT_M = 1.6
FOCAL_PX = 300.0


@dataclass
class SceneSpec:
    extent_m: float = 20.0  # half-width of the square scene
    n_vehicles: int = 6
    n_pedestrians: int = 4
    n_walls: int = 2
    points_per_m2: float = 8.0  # ground density at the 10 m reference range
    noise_sigma_m: float = 0.02
    n_cameras: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.extent_m <= 0 or self.points_per_m2 <= 0:
            raise ValueError("extent_m and points_per_m2 must be > 0")
        if min(self.n_vehicles, self.n_pedestrians, self.n_walls, self.n_cameras) < 0:
            raise ValueError("object and camera counts must be >= 0")
        if self.noise_sigma_m < 0:
            raise ValueError("noise_sigma_m must be >= 0")


@dataclass
class FeatureRenderConfig:
    embed_dim: int = 8
    noise_sigma: float = 0.05
    scales: tuple[int, ...] = (4, 8)
    seed: int = 0

    def __post_init__(self):
        self.scales = tuple(int(s) for s in self.scales)
        if self.embed_dim < 2:
            raise ValueError("embed_dim must be >= 2")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not self.scales or any(s < 1 for s in self.scales):
            raise ValueError("scales must be positive")
        if list(self.scales) != sorted(set(self.scales)):
            raise ValueError("scales must be strictly increasing")


@dataclass
class SceneObject:
    cls: int
    bbox_min: np.ndarray
    bbox_max: np.ndarray
    indices: np.ndarray  # member point indices into the scene cloud


@dataclass
class SyntheticScene:
    cloud: PointCloud
    labels: np.ndarray  # (N,) int class per point
    objects: list[SceneObject]
    calibs: list[CameraCalibration]
    feature_maps: list[FeatureMap]  # fused, one per camera


def _density_at(range_m: np.ndarray | float, points_per_m2: float):
    r = np.maximum(range_m, _MIN_RANGE_M)
    return points_per_m2 * (_REFERENCE_RANGE_M / r) ** 2


def _sample_ground(rng: np.random.Generator, spec: SceneSpec) -> np.ndarray:
    """Plane points with 1/r^2 density falloff, clipped to the square."""
    r_max = math.sqrt(2.0) * spec.extent_m
    expected = 2.0 * math.pi * spec.points_per_m2 * _REFERENCE_RANGE_M**2 * math.log(r_max / _MIN_RANGE_M)
    n = int(rng.poisson(expected))
    # radial pdf proportional to 1/r on [min_range, r_max]
    r = _MIN_RANGE_M * (r_max / _MIN_RANGE_M) ** rng.random(n)
    theta = rng.uniform(0.0, 2.0 * math.pi, n)
    x, y = r * np.cos(theta), r * np.sin(theta)
    keep = (np.abs(x) <= spec.extent_m) & (np.abs(y) <= spec.extent_m)
    z = rng.normal(0.0, spec.noise_sigma_m, int(keep.sum()))
    return np.column_stack([x[keep], y[keep], z])


def _yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


def _sample_faces(rng: np.random.Generator, faces, n_total: int) -> np.ndarray:
    """Draw n_total points over a list of (area, sampler) surface patches."""
    areas = np.array([f[0] for f in faces])
    counts = rng.multinomial(n_total, areas / areas.sum())
    parts = [faces[i][1](rng, int(c)) for i, c in enumerate(counts) if c > 0]
    return np.concatenate(parts, axis=0) if parts else np.empty((0, 3))


def _box_surface(rng, center, dims, yaw, n):
    """Points on the 4 sides and top of an upright box."""
    length, width, height = dims
    rot = _yaw_matrix(yaw)

    def side(axis, sign):
        def sample(rng, c):
            if axis == 0:  # faces normal to local x
                local = np.column_stack(
                    [np.full(c, sign * length / 2), rng.uniform(-width / 2, width / 2, c)]
                )
            else:
                local = np.column_stack(
                    [rng.uniform(-length / 2, length / 2, c), np.full(c, sign * width / 2)]
                )
            z = rng.uniform(0.0, height, c)
            return np.column_stack([local @ rot.T + center, z])

        return sample

    def top(rng, c):
        local = np.column_stack(
            [rng.uniform(-length / 2, length / 2, c), rng.uniform(-width / 2, width / 2, c)]
        )
        return np.column_stack([local @ rot.T + center, np.full(c, height)])

    faces = [
        (width * height, side(0, 1)),
        (width * height, side(0, -1)),
        (length * height, side(1, 1)),
        (length * height, side(1, -1)),
        (length * width, top),
    ]
    return _sample_faces(rng, faces, n)


def _cylinder_surface(rng, center, diameter, height, n):
    radius = diameter / 2.0

    def lateral(rng, c):
        ang = rng.uniform(0.0, 2.0 * math.pi, c)
        z = rng.uniform(0.0, height, c)
        return np.column_stack([center[0] + radius * np.cos(ang), center[1] + radius * np.sin(ang), z])

    def top(rng, c):
        ang = rng.uniform(0.0, 2.0 * math.pi, c)
        rr = radius * np.sqrt(rng.random(c))
        return np.column_stack(
            [center[0] + rr * np.cos(ang), center[1] + rr * np.sin(ang), np.full(c, height)]
        )

    faces = [(2.0 * math.pi * radius * height, lateral), (math.pi * radius**2, top)]
    return _sample_faces(rng, faces, n)


def _place_objects(rng: np.random.Generator, spec: SceneSpec):
    """Pick non-overlapping BEV placements; raises after bounded retries."""
    margin = 1.5
    placements = []  # (cls, center, bev_radius, geometry dict)
    classes = (
        [CLASS_WALL] * spec.n_walls
        + [CLASS_VEHICLE] * spec.n_vehicles
        + [CLASS_PEDESTRIAN] * spec.n_pedestrians
    )
    for cls in classes:
        if cls == CLASS_VEHICLE:
            dims = (rng.uniform(4.2, 4.8), rng.uniform(1.7, 2.1), rng.uniform(1.4, 1.8))
            yaw = rng.uniform(0.0, 2.0 * math.pi)
            radius = math.hypot(dims[0], dims[1]) / 2.0
            geom = {"dims": dims, "yaw": yaw}
        elif cls == CLASS_PEDESTRIAN:
            dims = (rng.uniform(0.5, 0.7), rng.uniform(1.5, 1.9))
            radius = dims[0] / 2.0
            geom = {"diameter": dims[0], "height": dims[1]}
        else:
            dims = (rng.uniform(13.0, 16.0), 0.3, rng.uniform(2.2, 3.0))
            yaw = rng.uniform(0.0, 2.0 * math.pi)
            radius = math.hypot(dims[0], dims[1]) / 2.0
            geom = {"dims": dims, "yaw": yaw}

        placed = False
        for _ in range(500):
            center = rng.uniform(-(spec.extent_m - 3.0), spec.extent_m - 3.0, 2)
            if np.hypot(*center) < 4.0:
                continue
            if all(
                np.hypot(*(center - c)) > radius + r + margin for _, c, r, _ in placements
            ):
                placements.append((cls, center, radius, geom))
                placed = True
                break
        if not placed:
            raise ValueError("could not place objects without overlap")
    return placements


def make_cameras(n_cameras: int) -> list[CameraCalibration]:
    """Outward-facing pinhole cameras evenly spaced in yaw at the origin."""
    intrinsics = np.array(
        [[FOCAL_PX, 0.0, IMAGE_WIDTH / 2.0], [0.0, FOCAL_PX, IMAGE_HEIGHT / 2.0], [0.0, 0.0, 1.0]]
    )
    calibs = []
    for i in range(n_cameras):
        yaw = 2.0 * math.pi * i / n_cameras
        forward = np.array([math.cos(yaw), math.sin(yaw), 0.0])
        right = np.array([math.sin(yaw), -math.cos(yaw), 0.0])
        down = np.array([0.0, 0.0, -1.0])
        rot = np.vstack([right, down, forward])
        ext = np.eye(4)
        ext[:3, :3] = rot
        ext[:3, 3] = -rot @ np.array([0.0, 0.0, CAMERA_HEIGHT_M])
        calibs.append(CameraCalibration(intrinsics, ext, IMAGE_WIDTH, IMAGE_HEIGHT))
    return calibs


def render_feature_maps(
    scene: SyntheticScene,
    embed_dim: int = 8,
    noise_sigma: float = 0.05,
    scales: tuple[int, ...] = (4, 8),
    seed: int = 0,
    class_embeddings: np.ndarray | None = None,
) -> list[list[FeatureMap]]:
    """Render per-camera feature-map pyramids from the scene labels.

    Every visible point splats its class embedding into its grid cell with
    the nearest point winning; untouched cells carry the ground embedding.
    Returns one list of maps (finest scale first) per camera.
    """
    if embed_dim < 2:
        raise ValueError("embed_dim must be >= 2")
    rng = np.random.default_rng(seed)
    if class_embeddings is None:
        emb = rng.normal(size=(len(CLASS_NAMES), embed_dim))
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
    else:
        emb = np.asarray(class_embeddings, dtype=np.float64)
        if emb.shape != (len(CLASS_NAMES), embed_dim):
            raise ValueError("class_embeddings must be (num classes, embed_dim)")

    out = []
    for calib in scene.calibs:
        u, v, depth, vis = project_points(scene.cloud.points, calib)
        vi = np.flatnonzero(vis)
        # nearest point wins: write far-to-near so the last write is closest
        order = vi[np.argsort(-depth[vi], kind="stable")]
        levels = []
        for scale in scales:
            if calib.image_width % scale or calib.image_height % scale:
                raise ValueError("image size must be divisible by every scale")
            gw, gh = calib.image_width // scale, calib.image_height // scale
            grid = np.tile(emb[CLASS_GROUND], (gh, gw, 1))
            cu = np.floor_divide(u[order], scale).astype(np.intp)
            cv = np.floor_divide(v[order], scale).astype(np.intp)
            flat = grid.reshape(-1, embed_dim)
            cells = cv * gw + cu
            flat[cells] = emb[scene.labels[order]]
            if noise_sigma > 0 and cells.size:
                touched = np.unique(cells)
                flat[touched] += rng.normal(0.0, noise_sigma, (touched.size, embed_dim))
            levels.append(FeatureMap(gh, gw, embed_dim, scale, grid))
        out.append(levels)
    return out


def generate_scene(
    spec: SceneSpec,
    seed: int | None = None,
    features: FeatureRenderConfig | None = None,
) -> SyntheticScene:
    """Build a labeled scene, its cameras, and fused feature maps.

    Deterministic for a fixed (spec, seed); seed defaults to spec.seed.
    """
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    features = features or FeatureRenderConfig()

    ground = _sample_ground(rng, spec)
    parts = [ground]
    labels = [np.zeros(len(ground), dtype=np.intp)]
    object_slices = []

    offset = len(ground)
    for cls, center, _, geom in _place_objects(rng, spec):
        r_center = float(np.hypot(*center))
        if cls == CLASS_PEDESTRIAN:
            d, h = geom["diameter"], geom["height"]
            area = math.pi * d * h + math.pi * (d / 2.0) ** 2
            n = max(5, int(rng.poisson(_density_at(r_center, spec.points_per_m2) * area)))
            pts = _cylinder_surface(rng, center, d, h, n)
        else:
            length, width, height = geom["dims"]
            area = 2.0 * (length + width) * height + length * width
            n = max(5, int(rng.poisson(_density_at(r_center, spec.points_per_m2) * area)))
            pts = _box_surface(rng, center, geom["dims"], geom["yaw"], n)
        if spec.noise_sigma_m > 0:
            pts = pts + rng.normal(0.0, spec.noise_sigma_m, pts.shape)
        parts.append(pts)
        labels.append(np.full(len(pts), cls, dtype=np.intp))
        object_slices.append((cls, offset, offset + len(pts)))
        offset += len(pts)

    points = np.concatenate(parts, axis=0)
    label_arr = np.concatenate(labels)
    base = np.array([_INTENSITY_BASE[int(c)] for c in label_arr])
    intensities = np.clip(base + rng.normal(0.0, 0.05, len(points)), 0.0, 1.0)
    cloud = PointCloud(points, intensities, frame_id=f"synthetic-{spec.seed if seed is None else seed}")

    objects = []
    for cls, lo, hi in object_slices:
        idx = np.arange(lo, hi, dtype=np.intp)
        objects.append(SceneObject(cls, points[lo:hi].min(axis=0), points[lo:hi].max(axis=0), idx))

    calibs = make_cameras(spec.n_cameras)
    scene = SyntheticScene(cloud, label_arr, objects, calibs, [])
    pyramids = render_feature_maps(
        scene,
        embed_dim=features.embed_dim,
        noise_sigma=features.noise_sigma,
        scales=features.scales,
        seed=features.seed,
    )
    scene.feature_maps = [fuse_levels(levels) for levels in pyramids]
    return scene
