"""Contrastive unit construction.

Builds the sampling space (non-ground, camera-visible points), draws
initial units with BEV farthest point sampling, aggregates per-unit
context, clusters non-ground points into instances, merges units that
land on the same instance, and attaches point statistics plus pooled
image features to every unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import CameraCalibration, FeatureMap, pool_cameras_batch, project_points
from .geom import (
    ClusterFilterConfig,
    PointCloud,
    bev_fps,
    filter_clusters,
    knn_context,
    pillar_context,
    rbnn_cluster,
)

STATS_DIM = 10
GROUND_Z_RADIUS_M = 5.0


@dataclass
class UnitConfig:
    n_initial: int = 64
    context_mode: str = "knn"  # "knn" | "pillar"
    k: int = 16
    pillar_side_m: float = 1.0
    cluster_radius_m: float = 1.0  # bridges desk-scale surface sampling gaps
    filter: ClusterFilterConfig = field(default_factory=ClusterFilterConfig)
    seed: int = 0

    def __post_init__(self):
        if self.n_initial < 2:
            raise ValueError("n_initial must be >= 2")
        if self.context_mode not in ("knn", "pillar"):
            raise ValueError("context_mode must be 'knn' or 'pillar'")
        if self.context_mode == "knn" and self.k < 1:
            raise ValueError("k must be >= 1")
        if self.context_mode == "pillar" and self.pillar_side_m <= 0:
            raise ValueError("pillar_side_m must be > 0")
        if self.cluster_radius_m <= 0:
            raise ValueError("cluster_radius_m must be > 0")


@dataclass
class ContrastiveUnit:
    member_points: np.ndarray  # sorted indices into the cloud
    origin_units: int  # initial units merged into this one
    cluster_id: int | None
    point_stats: np.ndarray  # (STATS_DIM,)
    image_feature: np.ndarray  # (fused channels,)


@dataclass
class UnitSet:
    units: list[ContrastiveUnit]

    def __len__(self) -> int:
        return len(self.units)


def sampling_space(
    cloud: PointCloud, ground_mask: np.ndarray, calibs: list[CameraCalibration]
) -> np.ndarray:
    """Indices of points that are non-ground and visible in >= 1 camera."""
    mask = np.asarray(ground_mask, dtype=bool)
    if mask.shape != (len(cloud),):
        raise ValueError("ground mask must align with the cloud")
    visible = np.zeros(len(cloud), dtype=bool)
    for calib in calibs:
        visible |= project_points(cloud.points, calib)[3]
    return np.flatnonzero(~mask & visible)


def unit_stats(cloud: PointCloud, members, ground_z: float) -> np.ndarray:
    """Fixed 10-dim summary of a member set.

    Layout: centroid x, y, z above ground; bbox extents x, y, z;
    log(1 + count); mean intensity; max height above ground; mean range.
    Permutation- and multiplicity-invariant in the member indices.
    """
    idx = np.unique(np.asarray(members, dtype=np.intp).ravel())
    if idx.size == 0:
        raise ValueError("empty member set")
    pts = cloud.points[idx]
    centroid = pts.mean(axis=0)
    extent = pts.max(axis=0) - pts.min(axis=0)
    return np.array(
        [
            centroid[0],
            centroid[1],
            centroid[2] - ground_z,
            extent[0],
            extent[1],
            extent[2],
            np.log1p(idx.size),
            cloud.intensities[idx].mean(),
            pts[:, 2].max() - ground_z,
            np.linalg.norm(pts, axis=1).mean(),
        ]
    )


def ground_height_at(cloud: PointCloud, ground_mask: np.ndarray, xy) -> float:
    """Local ground height: median z of ground points within 5 m (BEV) of
    xy, falling back to the global ground median, then to 0."""
    gidx = np.flatnonzero(np.asarray(ground_mask, dtype=bool))
    if gidx.size == 0:
        return 0.0
    gpts = cloud.points[gidx]
    d2 = np.sum((gpts[:, :2] - np.asarray(xy, dtype=np.float64)) ** 2, axis=1)
    near = d2 <= GROUND_Z_RADIUS_M**2
    if near.any():
        return float(np.median(gpts[near, 2]))
    return float(np.median(gpts[:, 2]))


def unit_stats_batch(
    cloud: PointCloud, ground_mask: np.ndarray, member_sets: list[np.ndarray]
) -> np.ndarray:
    """Stack unit_stats for several member sets against one cloud."""
    out = np.empty((len(member_sets), STATS_DIM))
    for i, members in enumerate(member_sets):
        centroid_xy = cloud.points[members, :2].mean(axis=0)
        gz = ground_height_at(cloud, ground_mask, centroid_xy)
        out[i] = unit_stats(cloud, members, gz)
    return out


def build_units(
    cloud: PointCloud,
    ground_mask: np.ndarray,
    calibs: list[CameraCalibration],
    fused_maps: list[FeatureMap],
    cfg: UnitConfig,
) -> UnitSet:
    """Construct the instance-aware contrastive units for one frame.

    Initial units are BEV-FPS centers plus their context (KNN or pillar,
    drawn from the sampling space). Non-ground points are clustered and
    the clusters size/aspect-filtered; initial units whose centers share
    a retained cluster merge into one unit that covers the whole cluster,
    averaging their image features and recomputing point statistics over
    the union. Units alone in a cluster keep their own representation but
    record the cluster id.
    """
    mask = np.asarray(ground_mask, dtype=bool)
    space = sampling_space(cloud, mask, calibs)
    if space.size < 2:
        raise ValueError("insufficient sampling space")

    centers = bev_fps(cloud, space, cfg.n_initial)
    if cfg.context_mode == "knn":
        contexts = [knn_context(cloud, int(c), cfg.k, space) for c in centers]
    else:
        contexts = [pillar_context(cloud, int(c), cfg.pillar_side_m, space) for c in centers]

    clusters = filter_clusters(
        rbnn_cluster(cloud, np.flatnonzero(~mask), cfg.cluster_radius_m), cfg.filter
    )

    pooled, seen = pool_cameras_batch(cloud.points, calibs, fused_maps)
    unit_features = []
    for members in contexts:
        vis = members[seen[members]]  # context members come from the sampling space
        unit_features.append(pooled[vis].mean(axis=0))

    # group initial units by retained cluster; singles and unclustered stay as-is
    groups: dict = {}
    order = []
    for init_idx, center in enumerate(centers):
        cid = int(clusters.labels[center])
        key = cid if cid >= 0 else ("solo", init_idx)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(init_idx)

    units = []
    for key in order:
        group = groups[key]
        cid = key if isinstance(key, int) else None
        if len(group) == 1:
            members = contexts[group[0]]
            image_feature = unit_features[group[0]]
        else:
            members = np.union1d(
                clusters.clusters[cid].indices,
                np.concatenate([contexts[g] for g in group]),
            )
            image_feature = np.mean([unit_features[g] for g in group], axis=0)
        gz = ground_height_at(cloud, mask, cloud.points[members, :2].mean(axis=0))
        units.append(
            ContrastiveUnit(
                member_points=members,
                origin_units=len(group),
                cluster_id=cid,
                point_stats=unit_stats(cloud, members, gz),
                image_feature=image_feature,
            )
        )
    return UnitSet(units)
