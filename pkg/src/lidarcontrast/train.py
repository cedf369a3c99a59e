"""Pre-training loop over synthetic scenes.

Supports the three pairing modes: "cross" matches point-branch features of
an augmented cloud against frozen image features; "single" matches the
point-branch features of two independently augmented copies of the same
units; "multi" optimizes the unweighted sum of both losses. Only the
encoder and projection heads train; image features never change.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geom import GroundSegConfig, PointCloud, augment, sample_augmentation, segment_ground
from .mlp import Mlp, MlpGrads, init_mlp, mlp_backward, mlp_forward, sgd_update
from .objective import (
    alignment_score,
    contrastive_accuracy,
    head_backward,
    head_forward,
    infonce,
    negative_sets,
    similarity_matrix,
)
from .scene import FeatureRenderConfig, SceneSpec, SyntheticScene, generate_scene
from .units import STATS_DIM, UnitConfig, UnitSet, build_units, unit_stats_batch

MODES = ("single", "cross", "multi")
ENCODER_HIDDEN = 32
ENCODER_OUT = 16
HEAD_HIDDEN = 32
HEAD_OUT = 16

# the toy point encoder is a plain two-layer perceptron
encoder_forward = mlp_forward
encoder_backward = mlp_backward


@dataclass
class TrainConfig:
    mode: str = "cross"
    steps: int = 500
    learning_rate: float = 0.1
    tau: float = 0.07
    L: int | None = None  # None -> floor(B / 2)
    units: UnitConfig = field(default_factory=UnitConfig)
    scene: SceneSpec = field(default_factory=SceneSpec)
    ground: GroundSegConfig = field(default_factory=GroundSegConfig)
    features: FeatureRenderConfig = field(default_factory=FeatureRenderConfig)
    freeze_image_head: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.tau <= 0:
            raise ValueError("tau must be > 0")
        if self.L is not None and self.L < 1:
            raise ValueError("L must be >= 1")


@dataclass
class TrainState:
    encoder: Mlp
    point_head: Mlp
    image_head: Mlp
    step: int = 0


@dataclass
class StepMetrics:
    loss: float
    contrastive_accuracy: float
    alignment_score: float


@dataclass
class RunTrace:
    records: list[StepMetrics]
    final_state: TrainState


@dataclass
class PreparedScene:
    """Per-scene work that is shared by every step: ground mask, units,
    member sets, and the frozen per-unit image feature matrix."""

    ground_mask: np.ndarray
    units: UnitSet
    member_sets: list[np.ndarray]
    image_features: np.ndarray  # (B, C), never updated


def prepare_scene(scene: SyntheticScene, cfg: TrainConfig) -> PreparedScene:
    mask = segment_ground(scene.cloud, cfg.ground)
    units = build_units(scene.cloud, mask, scene.calibs, scene.feature_maps, cfg.units)
    return PreparedScene(
        ground_mask=mask,
        units=units,
        member_sets=[u.member_points for u in units.units],
        image_features=np.vstack([u.image_feature for u in units.units]),
    )


def init_state(cfg: TrainConfig, image_dim: int) -> TrainState:
    rng = np.random.default_rng([cfg.seed, 0])
    return TrainState(
        encoder=init_mlp(rng, STATS_DIM, ENCODER_HIDDEN, ENCODER_OUT),
        point_head=init_mlp(rng, ENCODER_OUT, HEAD_HIDDEN, HEAD_OUT),
        image_head=init_mlp(rng, image_dim, HEAD_HIDDEN, HEAD_OUT),
    )


def _add_grads(a: MlpGrads, b: MlpGrads) -> MlpGrads:
    return MlpGrads(a.w1 + b.w1, a.b1 + b.b1, a.w2 + b.w2, a.b2 + b.b2)


def _point_branch(state: TrainState, cloud: PointCloud, prepared: PreparedScene):
    stats = unit_stats_batch(cloud, prepared.ground_mask, prepared.member_sets)
    z, enc_cache = mlp_forward(state.encoder, stats)
    proj, head_cache = head_forward(state.point_head, z)
    return proj, (enc_cache, head_cache)


def _point_backward(state: TrainState, caches, grad_proj):
    enc_cache, head_cache = caches
    head_grads, dz = head_backward(head_cache, grad_proj)
    enc_grads, _ = mlp_backward(enc_cache, dz)
    return enc_grads, head_grads


def train_step(
    state: TrainState,
    scene: SyntheticScene,
    cfg: TrainConfig,
    prepared: PreparedScene | None = None,
) -> tuple[TrainState, StepMetrics]:
    """One plain gradient-descent step; returns (new state, metrics).

    Metrics are evaluated at the incoming parameters, before the update.
    Deterministic: the augmentation stream is derived from (seed, step).
    """
    if prepared is None:
        prepared = prepare_scene(scene, cfg)
    b = len(prepared.units)
    n_neg = cfg.L if cfg.L is not None else max(1, b // 2)

    rng = np.random.default_rng([cfg.seed, state.step + 1])
    cloud1 = augment(scene.cloud, sample_augmentation(rng))
    proj1, caches1 = _point_branch(state, cloud1, prepared)

    image_grads: MlpGrads | None = None
    if cfg.mode in ("cross", "multi"):
        image_proj, image_cache = head_forward(state.image_head, prepared.image_features)
        sets = negative_sets(similarity_matrix(image_proj), n_neg)
    else:
        sets = negative_sets(similarity_matrix(proj1), n_neg)

    if cfg.mode == "cross":
        out = infonce(proj1, image_proj, sets, cfg.tau)
        loss = out.value
        enc_grads, point_grads = _point_backward(state, caches1, out.grad_point)
        image_grads, _ = head_backward(image_cache, out.grad_image)
        metric_pair = (proj1, image_proj)
    elif cfg.mode == "single":
        cloud2 = augment(scene.cloud, sample_augmentation(rng))
        proj2, caches2 = _point_branch(state, cloud2, prepared)
        out = infonce(proj1, proj2, sets, cfg.tau)
        loss = out.value
        enc1, head1 = _point_backward(state, caches1, out.grad_point)
        enc2, head2 = _point_backward(state, caches2, out.grad_image)
        enc_grads, point_grads = _add_grads(enc1, enc2), _add_grads(head1, head2)
        metric_pair = (proj1, proj2)
    else:  # multi: unweighted sum of the single and cross losses
        cloud2 = augment(scene.cloud, sample_augmentation(rng))
        proj2, caches2 = _point_branch(state, cloud2, prepared)
        out_single = infonce(proj1, proj2, sets, cfg.tau)
        out_cross = infonce(proj1, image_proj, sets, cfg.tau)
        loss = out_single.value + out_cross.value
        enc1, head1 = _point_backward(
            state, caches1, out_single.grad_point + out_cross.grad_point
        )
        enc2, head2 = _point_backward(state, caches2, out_single.grad_image)
        enc_grads, point_grads = _add_grads(enc1, enc2), _add_grads(head1, head2)
        image_grads, _ = head_backward(image_cache, out_cross.grad_image)
        metric_pair = (proj1, image_proj)

    metrics = StepMetrics(
        loss=float(loss),
        contrastive_accuracy=contrastive_accuracy(*metric_pair, sets),
        alignment_score=alignment_score(*metric_pair),
    )
    new_image_head = state.image_head
    if image_grads is not None and not cfg.freeze_image_head:
        new_image_head = sgd_update(state.image_head, image_grads, cfg.learning_rate)
    new_state = TrainState(
        encoder=sgd_update(state.encoder, enc_grads, cfg.learning_rate),
        point_head=sgd_update(state.point_head, point_grads, cfg.learning_rate),
        image_head=new_image_head,
        step=state.step + 1,
    )
    return new_state, metrics


def run_pretrain(cfg: TrainConfig) -> RunTrace:
    """Generate the scene, build units once, and train for cfg.steps."""
    scene = generate_scene(cfg.scene, features=cfg.features)
    prepared = prepare_scene(scene, cfg)
    state = init_state(cfg, image_dim=prepared.image_features.shape[1])
    records = []
    for _ in range(cfg.steps):
        state, metrics = train_step(state, scene, cfg, prepared)
        records.append(metrics)
    return RunTrace(records, state)
