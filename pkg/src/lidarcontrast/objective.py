"""Contrastive objective and its supporting machinery.

Cosine similarity, similarity-balanced negative sampling, projection
heads, the bidirectional InfoNCE loss with analytic gradients, and the
contrastive-accuracy / alignment metrics used by the modality study.

Both loss terms share the per-unit negative sets: one treats image
features as anchors against point-branch candidates, the other swaps the
roles. Feature rows entering the loss must be length-normalized (the
projection head normalizes for you); gradients are taken with respect to
the normalized features.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import Mlp, MlpGrads, mlp_backward, mlp_forward


@dataclass
class NegativeSets:
    """Per-unit negative index sets under a budget of L negatives each."""

    sets: list[np.ndarray]
    L: int

    def __post_init__(self):
        self.sets = [np.asarray(s, dtype=np.intp) for s in self.sets]
        for i, s in enumerate(self.sets):
            if (s == i).any():
                raise ValueError("a unit cannot be its own negative")


@dataclass
class LossOutput:
    value: float
    grad_point: np.ndarray  # (B, dim)
    grad_image: np.ndarray  # (B, dim)


def _as_matrix(feats: np.ndarray, name: str = "features") -> np.ndarray:
    f = np.ascontiguousarray(feats, dtype=np.float64)
    if f.ndim != 2 or f.shape[0] < 1:
        raise ValueError(f"{name} must be a (B, dim) matrix with B >= 1")
    if not np.isfinite(f).all():
        raise ValueError(f"non-finite {name}")
    return f


def normalize_rows(feats: np.ndarray) -> np.ndarray:
    f = _as_matrix(feats)
    norms = np.linalg.norm(f, axis=1, keepdims=True)
    if (norms == 0).any():
        raise ValueError("degenerate feature")
    return f / norms


def similarity_matrix(feats: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities of the rows: symmetric, unit diagonal."""
    f = normalize_rows(feats)
    sim = f @ f.T
    sim = np.clip((sim + sim.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(sim, 1.0)
    return sim


def negative_sets(sim: np.ndarray, L: int) -> NegativeSets:
    """Keep the L least-similar units per row as its negatives.

    Ties break toward the lowest index; each set has min(L, B-1) members,
    returned sorted ascending.
    """
    if L < 1:
        raise ValueError("L must be >= 1")
    s = np.asarray(sim, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ValueError("sim must be square")
    b = s.shape[0]
    take = min(L, b - 1)
    sets = []
    for i in range(b):
        others = np.concatenate([np.arange(i), np.arange(i + 1, b)])
        order = np.lexsort((others, s[i, others]))
        sets.append(np.sort(others[order[:take]]))
    return NegativeSets(sets, L)


def uniform_negative_sets(b: int, L: int, rng: np.random.Generator) -> NegativeSets:
    """Baseline: L negatives drawn uniformly without replacement per unit."""
    if L < 1:
        raise ValueError("L must be >= 1")
    take = min(L, b - 1)
    sets = []
    for i in range(b):
        others = np.concatenate([np.arange(i), np.arange(i + 1, b)])
        sets.append(np.sort(rng.choice(others, size=take, replace=False)))
    return NegativeSets(sets, L)


def head_forward(head: Mlp, feats: np.ndarray):
    """Project features and length-normalize each output row.

    Returns (normalized (B, out_dim), cache for head_backward).
    """
    x = _as_matrix(feats, "head input")
    y, mlp_cache = mlp_forward(head, x)
    norms = np.linalg.norm(y, axis=1, keepdims=True)
    if (norms == 0).any():
        raise ValueError("degenerate feature")
    out = y / norms
    return out, (mlp_cache, out, norms)


def head_backward(cache, grad_out: np.ndarray) -> tuple[MlpGrads, np.ndarray]:
    """Backprop through the normalization and the head MLP."""
    mlp_cache, out, norms = cache
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != out.shape:
        raise ValueError("grad_out shape does not match the cached forward pass")
    dy = (g - np.sum(g * out, axis=1, keepdims=True) * out) / norms
    return mlp_backward(mlp_cache, dy)


def _set_list(sets) -> list[np.ndarray]:
    return sets.sets if isinstance(sets, NegativeSets) else [np.asarray(s, dtype=np.intp) for s in sets]


def infonce(point_feats: np.ndarray, image_feats: np.ndarray, sets, tau: float) -> LossOutput:
    """Bidirectional InfoNCE over matched unit features.

    Each unit i contributes two cross-entropy terms, one per anchoring
    direction, with the softmax taken over its positive plus the
    candidates named in sets[i]; the loss is the mean of all 2B terms.
    Returns the scalar along with analytic gradients for both matrices.
    """
    p = _as_matrix(point_feats, "point features")
    im = _as_matrix(image_feats, "image features")
    if p.shape != im.shape:
        raise ValueError("feature matrices must have matching shapes")
    if tau <= 0:
        raise ValueError("tau must be > 0")
    b = p.shape[0]
    neg = _set_list(sets)
    if len(neg) != b:
        raise ValueError("one negative set per unit required")

    value = 0.0
    grad_p = np.zeros_like(p)
    grad_i = np.zeros_like(im)
    w = 1.0 / (2.0 * b)
    for anchors, cands, grad_a, grad_c in ((im, p, grad_i, grad_p), (p, im, grad_p, grad_i)):
        for i, s in enumerate(neg):
            if (s < 0).any() or (s >= b).any():
                raise ValueError("negative index out of range")
            idx = np.concatenate(([i], s))
            logits = cands[idx] @ anchors[i] / tau
            shift = logits - logits.max()
            e = np.exp(shift)
            z = e.sum()
            value += w * (np.log(z) - shift[0])
            soft = e / z
            soft[0] -= 1.0
            grad_c[idx] += (w / tau) * np.outer(soft, anchors[i])
            grad_a[i] += (w / tau) * (soft @ cands[idx])
    return LossOutput(float(value), grad_p, grad_i)


def contrastive_accuracy(point_feats: np.ndarray, image_feats: np.ndarray, sets) -> float:
    """Fraction of the 2B directional classifications where the positive
    similarity strictly beats every negative; empty sets count correct."""
    p = _as_matrix(point_feats, "point features")
    im = _as_matrix(image_feats, "image features")
    if p.shape != im.shape:
        raise ValueError("feature matrices must have matching shapes")
    neg = _set_list(sets)
    correct = 0
    for anchors, cands in ((p, im), (im, p)):
        for i, s in enumerate(neg):
            pos = anchors[i] @ cands[i]
            if s.size == 0 or pos > (cands[s] @ anchors[i]).max():
                correct += 1
    return correct / (2.0 * p.shape[0])


def alignment_score(point_feats: np.ndarray, image_feats: np.ndarray) -> float:
    """Mean cosine similarity of the positive pairs (rows must be unit length)."""
    p = _as_matrix(point_feats, "point features")
    im = _as_matrix(image_feats, "image features")
    if p.shape != im.shape:
        raise ValueError("feature matrices must have matching shapes")
    return float(np.sum(p * im, axis=1).mean())
