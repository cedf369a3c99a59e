"""Geometric kernels over LiDAR point clouds.

Pure functions for augmentation, polar-grid ground segmentation, BEV
farthest point sampling, neighborhood queries, and fixed-radius clustering.
Everything is deterministic; ties are broken by lowest point index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

UNCLUSTERED = -1


@dataclass
class PointCloud:
    """A LiDAR frame: N positions in meters plus a per-point intensity."""

    points: np.ndarray  # (N, 3) float64, lidar frame
    intensities: np.ndarray  # (N,) float64 in [0, 1]
    frame_id: str = ""

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        self.intensities = np.ascontiguousarray(self.intensities, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError("points must have shape (N, 3)")
        if self.intensities.shape != (self.points.shape[0],):
            raise ValueError("intensities length must equal point count")
        if self.points.size and not np.isfinite(self.points).all():
            raise ValueError("non-finite point coordinates")
        if self.intensities.size and not np.isfinite(self.intensities).all():
            raise ValueError("non-finite intensities")

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class AugmentationParams:
    """Rotation about the vertical axis, uniform scale, and axis flips."""

    rotation_rad: float = 0.0
    scale: float = 1.0
    flip_x: bool = False
    flip_y: bool = False

    def __post_init__(self):
        if not math.isfinite(self.rotation_rad):
            raise ValueError("rotation_rad must be finite")
        if not (math.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale must be positive and finite")


@dataclass
class GroundSegConfig:
    """Parameters of the polar-grid line-fitting ground segmenter."""

    num_segments: int = 180
    bin_length_m: float = 1.0
    max_slope: float = 0.1
    dist_threshold_m: float = 0.25
    max_start_height_m: float = 0.5

    def __post_init__(self):
        if self.num_segments < 1:
            raise ValueError("num_segments must be >= 1")
        for name in ("bin_length_m", "max_slope", "dist_threshold_m", "max_start_height_m"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass
class Cluster:
    indices: np.ndarray  # sorted point indices into the source cloud
    bbox_min: np.ndarray  # (3,)
    bbox_max: np.ndarray  # (3,)

    @property
    def size(self) -> int:
        return int(self.indices.size)


@dataclass
class ClusterSet:
    """Per-point labels plus one Cluster record per connected component."""

    labels: np.ndarray  # (N,) int, UNCLUSTERED for unassigned points
    clusters: list[Cluster]


@dataclass
class ClusterFilterConfig:
    min_points: int = 5
    max_extent_m: float = 12.0
    max_aspect: float = 12.0

    def __post_init__(self):
        if self.min_points < 1:
            raise ValueError("min_points must be >= 1")
        if self.max_extent_m <= 0:
            raise ValueError("max_extent_m must be > 0")
        if self.max_aspect < 1:
            raise ValueError("max_aspect must be >= 1")


def _index_array(indices, n: int) -> np.ndarray:
    """Canonicalize an index set: unique, sorted ascending, bounds-checked."""
    idx = np.unique(np.asarray(indices, dtype=np.intp).ravel())
    if idx.size and (idx[0] < 0 or idx[-1] >= n):
        raise ValueError("point index out of range")
    return idx


def augment(cloud: PointCloud, params: AugmentationParams) -> PointCloud:
    """Rotate about z, scale about the origin, then apply axis flips.

    Point order and intensities are preserved, so index-based
    correspondences survive augmentation.
    """
    c, s = math.cos(params.rotation_rad), math.sin(params.rotation_rad)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    pts = cloud.points @ rot.T
    pts *= params.scale
    if params.flip_x:
        pts[:, 0] = -pts[:, 0]
    if params.flip_y:
        pts[:, 1] = -pts[:, 1]
    return PointCloud(pts, cloud.intensities.copy(), cloud.frame_id)


def sample_augmentation(
    rng: np.random.Generator,
    rotation_range: tuple[float, float] = (-math.pi / 4, math.pi / 4),
    scale_range: tuple[float, float] = (0.95, 1.05),
    flip_prob: float = 0.5,
) -> AugmentationParams:
    """Draw augmentation parameters for the trainer."""
    return AugmentationParams(
        rotation_rad=float(rng.uniform(*rotation_range)),
        scale=float(rng.uniform(*scale_range)),
        flip_x=bool(rng.random() < flip_prob),
        flip_y=bool(rng.random() < flip_prob),
    )


def _fit_line(r: np.ndarray, z: np.ndarray) -> tuple[float, float]:
    """Least-squares z = m*r + b."""
    rm, zm = r.mean(), z.mean()
    denom = float(np.sum((r - rm) ** 2))
    if denom == 0.0:
        return 0.0, float(zm)
    m = float(np.sum((r - rm) * (z - zm)) / denom)
    return m, float(zm - m * rm)


def _line_point_dist(m: float, b: float, r: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.abs(m * r - z + b) / math.sqrt(m * m + 1.0)


def _sector_lines(rep_r: np.ndarray, rep_z: np.ndarray, cfg: GroundSegConfig) -> list[tuple[float, float]]:
    """Fit piecewise lines to a sector's bin representatives.

    Grows a line while the fit stays within max_slope and every member is
    within dist_threshold_m of it; otherwise starts a new line. A line is
    kept only if its slope is shallow and its seed (lowest-range point)
    sits within max_start_height_m of z=0.
    """
    lines: list[tuple[float, float]] = []

    def finalize(start: int, stop: int, fit: tuple[float, float] | None):
        if stop - start == 1:
            fit = (0.0, float(rep_z[start]))
        assert fit is not None
        m, b = fit
        if abs(m) <= cfg.max_slope and abs(rep_z[start]) <= cfg.max_start_height_m:
            lines.append((m, b))

    start = 0
    fit: tuple[float, float] | None = None
    for i in range(1, rep_r.size):
        m, b = _fit_line(rep_r[start : i + 1], rep_z[start : i + 1])
        resid = _line_point_dist(m, b, rep_r[start : i + 1], rep_z[start : i + 1])
        if abs(m) <= cfg.max_slope and resid.max() <= cfg.dist_threshold_m:
            fit = (m, b)
        else:
            finalize(start, i, fit)
            start, fit = i, None
    finalize(start, rep_r.size, fit)
    return lines


def segment_ground(cloud: PointCloud, cfg: GroundSegConfig) -> np.ndarray:
    """Label ground returns with polar-sector piecewise line fitting.

    Points are partitioned into angular sectors and radial bins; the
    lowest point of each bin represents it. Lines fitted to these
    representatives model the local ground profile, and any point within
    dist_threshold_m of a valid line in its sector is marked ground.

    Returns a boolean mask aligned with the cloud.
    """
    n = len(cloud)
    mask = np.zeros(n, dtype=bool)
    if n == 0:
        return mask
    x, y, z = cloud.points[:, 0], cloud.points[:, 1], cloud.points[:, 2]
    r = np.hypot(x, y)
    theta = np.arctan2(y, x)  # [-pi, pi]
    sector_width = 2.0 * math.pi / cfg.num_segments
    sector = np.minimum(((theta + math.pi) / sector_width).astype(np.intp), cfg.num_segments - 1)
    rbin = (r / cfg.bin_length_m).astype(np.intp)

    order = np.lexsort((np.arange(n), z))  # stable: lowest z, then lowest index
    for s in range(cfg.num_segments):
        in_sector = np.flatnonzero(sector == s)
        if in_sector.size == 0:
            continue
        # lowest-z representative per occupied radial bin
        sector_sorted = order[sector[order] == s]
        _, first = np.unique(rbin[sector_sorted], return_index=True)
        reps = sector_sorted[first]
        rep_order = np.argsort(r[reps], kind="stable")
        rep_r, rep_z = r[reps][rep_order], z[reps][rep_order]

        lines = _sector_lines(rep_r, rep_z, cfg)
        if not lines:
            continue
        best = np.full(in_sector.size, np.inf)
        for m, b in lines:
            np.minimum(best, _line_point_dist(m, b, r[in_sector], z[in_sector]), out=best)
        mask[in_sector] = best <= cfg.dist_threshold_m
    return mask


def bev_fps(cloud: PointCloud, eligible, n: int) -> np.ndarray:
    """Greedy farthest point sampling on (x, y) only.

    The first pick is the eligible point farthest from the BEV centroid of
    the eligible set; each later pick maximizes the minimum BEV distance
    to all previous picks. Ties go to the lowest point index. Returns the
    picked indices in selection order.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    elig = _index_array(eligible, len(cloud))
    m = min(n, elig.size)
    if m == 0:
        return np.empty(0, dtype=np.intp)
    xy = cloud.points[elig, :2]
    centroid = xy.mean(axis=0)
    d0 = np.linalg.norm(xy - centroid, axis=1)
    chosen = np.empty(m, dtype=np.intp)
    pick = int(np.argmax(d0))  # first occurrence == lowest index (elig is sorted)
    chosen[0] = pick
    min_d = np.linalg.norm(xy - xy[pick], axis=1)
    min_d[pick] = -1.0  # never re-pick
    for i in range(1, m):
        pick = int(np.argmax(min_d))
        chosen[i] = pick
        np.minimum(min_d, np.linalg.norm(xy - xy[pick], axis=1), out=min_d)
        min_d[pick] = -1.0
    return elig[chosen]


def knn_context(cloud: PointCloud, center: int, k: int, pool) -> np.ndarray:
    """The k nearest pool points to the center in 3D (center included)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    pool_idx = _index_array(pool, len(cloud))
    if center not in pool_idx:
        raise ValueError("center must be in pool")
    d = np.linalg.norm(cloud.points[pool_idx] - cloud.points[center], axis=1)
    order = np.lexsort((pool_idx, d))  # distance, then lowest index
    return np.sort(pool_idx[order[: min(k, pool_idx.size)]])


def pillar_context(cloud: PointCloud, center: int, side_m: float, pool) -> np.ndarray:
    """All pool points inside the vertical square pillar around the center.

    The pillar has edge side_m in (x, y) and is unbounded in z.
    """
    if side_m <= 0:
        raise ValueError("side_m must be > 0")
    pool_idx = _index_array(pool, len(cloud))
    if center not in pool_idx:
        raise ValueError("center must be in pool")
    half = side_m / 2.0
    delta = np.abs(cloud.points[pool_idx, :2] - cloud.points[center, :2])
    return pool_idx[(delta[:, 0] <= half) & (delta[:, 1] <= half)]


def rbnn_cluster(cloud: PointCloud, candidate, radius_m: float) -> ClusterSet:
    """Radially-bounded nearest-neighbor clustering of candidate points.

    Clusters are the connected components of the graph joining candidates
    at 3D distance <= radius_m, found with a k-d tree. Component ids are
    assigned by lowest member index, ascending.
    """
    if radius_m <= 0:
        raise ValueError("radius_m must be > 0")
    n = len(cloud)
    labels = np.full(n, UNCLUSTERED, dtype=np.intp)
    cand = _index_array(candidate, n)
    if cand.size == 0:
        return ClusterSet(labels, [])

    tree = cKDTree(cloud.points[cand])
    pairs = tree.query_pairs(radius_m, output_type="ndarray")
    graph = coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(cand.size, cand.size)
    )
    n_comp, comp = connected_components(graph, directed=False)

    # relabel components by their lowest cloud index
    first_member = np.full(n_comp, np.iinfo(np.intp).max, dtype=np.intp)
    np.minimum.at(first_member, comp, cand)
    new_id = np.empty(n_comp, dtype=np.intp)
    new_id[np.argsort(first_member)] = np.arange(n_comp)
    comp = new_id[comp]

    labels[cand] = comp
    clusters = []
    for cid in range(n_comp):
        members = cand[comp == cid]
        pts = cloud.points[members]
        clusters.append(Cluster(members, pts.min(axis=0), pts.max(axis=0)))
    return ClusterSet(labels, clusters)


def filter_clusters(clusters: ClusterSet, cfg: ClusterFilterConfig) -> ClusterSet:
    """Drop clusters with too few points, oversized boxes, or extreme
    horizontal aspect; their points become unclustered. Retained clusters
    are re-labeled by lowest member index. Idempotent.
    """
    kept = []
    for cl in clusters.clusters:
        extent = cl.bbox_max - cl.bbox_min
        horiz = np.sort(extent[:2])
        aspect = horiz[1] / max(horiz[0], 0.1)
        if cl.size >= cfg.min_points and np.all(extent <= cfg.max_extent_m) and aspect <= cfg.max_aspect:
            kept.append(cl)
    kept.sort(key=lambda cl: int(cl.indices[0]))
    labels = np.full(clusters.labels.shape, UNCLUSTERED, dtype=np.intp)
    for cid, cl in enumerate(kept):
        labels[cl.indices] = cid
    return ClusterSet(labels, kept)
