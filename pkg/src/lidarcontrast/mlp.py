"""Two-layer perceptron with manual forward/backward passes.

Shared by the projection heads and the toy point encoder. Gradients are
computed by hand so they can be verified against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Mlp:
    """x -> relu(x W1 + b1) W2 + b2."""

    w1: np.ndarray  # (in_dim, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, out_dim)
    b2: np.ndarray  # (out_dim,)

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.size and not np.isfinite(arr).all():
                raise ValueError(f"non-finite parameter {name}")
            setattr(self, name, arr)
        if self.w1.shape[1] != self.b1.shape[0] or self.w2.shape[0] != self.b1.shape[0]:
            raise ValueError("hidden dimensions disagree")
        if self.w2.shape[1] != self.b2.shape[0]:
            raise ValueError("output dimensions disagree")

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[1]

    def copy(self) -> "Mlp":
        return Mlp(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


@dataclass
class MlpGrads:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray


def init_mlp(rng: np.random.Generator, in_dim: int, hidden: int, out_dim: int) -> Mlp:
    """He-scaled random weights, zero biases."""
    w1 = rng.normal(0.0, np.sqrt(2.0 / in_dim), size=(in_dim, hidden))
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), size=(hidden, out_dim))
    return Mlp(w1, np.zeros(hidden), w2, np.zeros(out_dim))


def mlp_forward(params: Mlp, x: np.ndarray):
    """Returns (output (B, out_dim), cache for mlp_backward)."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ValueError(f"input must be (B, {params.in_dim})")
    z1 = x @ params.w1 + params.b1
    h = np.maximum(z1, 0.0)
    y = h @ params.w2 + params.b2
    return y, (params, x, z1, h)


def mlp_backward(cache, grad_out: np.ndarray) -> tuple[MlpGrads, np.ndarray]:
    """Backprop grad_out (B, out_dim) to parameter and input gradients."""
    params, x, z1, h = cache
    grad_out = np.asarray(grad_out, dtype=np.float64)
    if grad_out.shape != (x.shape[0], params.out_dim):
        raise ValueError("grad_out shape does not match the cached forward pass")
    dw2 = h.T @ grad_out
    db2 = grad_out.sum(axis=0)
    dh = grad_out @ params.w2.T
    dz1 = dh * (z1 > 0)
    dw1 = x.T @ dz1
    db1 = dz1.sum(axis=0)
    dx = dz1 @ params.w1.T
    return MlpGrads(dw1, db1, dw2, db2), dx


def sgd_update(params: Mlp, grads: MlpGrads, lr: float) -> Mlp:
    """Plain gradient-descent step; returns new parameters."""
    return Mlp(
        params.w1 - lr * grads.w1,
        params.b1 - lr * grads.b1,
        params.w2 - lr * grads.w2,
        params.b2 - lr * grads.b2,
    )
