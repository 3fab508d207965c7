"""Fusion of the two representation streams and the per-task output heads.

The structure stream e and the propagation-enhanced context stream
h + tanh(z_final) are blended with a single scalar: o = gamma * e +
(1 - gamma) * (h + tanh(z)). Task heads read o: graph instances pool
over nodes before a softmax, node labeling applies a per-row softmax,
and next-user ranking scores every user while barring the ones already
in the cascade.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoders import Linear, Module
from .errors import ConfigError, DataError
from .tensor import (
    MASK_NEG,
    Tensor,
    add,
    constant,
    cross_entropy,
    mean_pool,
    scale,
    softmax,
    tanh,
    transpose,
)


@dataclass(frozen=True)
class FusionConfig:
    """Blend weight and the kinetics-loss multiplier."""

    gamma: float = 0.5
    lam: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.lam < 0.0:
            raise ConfigError(f"lambda must be non-negative, got {self.lam}")


def enhance(h: Tensor, z_final: Tensor) -> Tensor:
    """Inject the propagation signal into the context stream:
    h + tanh(z_final)."""
    if h.shape != z_final.shape:
        raise DataError("context and propagation embeddings must align")
    return add(h, tanh(z_final))


def fuse(e: Tensor, h_hat: Tensor, gamma: float) -> Tensor:
    """Convex blend o = gamma * e + (1 - gamma) * h_hat."""
    if not 0.0 <= gamma <= 1.0:
        raise ConfigError(f"gamma must lie in [0, 1], got {gamma}")
    if e.shape != h_hat.shape:
        raise DataError("fusion inputs must share a shape")
    return add(scale(e, gamma), scale(h_hat, 1.0 - gamma))


class GraphHead(Module):
    """Mean-pool the fused node embeddings, then classify the instance."""

    def __init__(self, d_model: int, n_classes: int, rng, name: str = "graph_head"):
        if n_classes < 2:
            raise ConfigError("classification needs at least two classes")
        self.n_classes = n_classes
        self.linear = Linear(d_model, n_classes, rng, name)

    def __call__(self, fused: Tensor) -> Tensor:
        return softmax(self.linear(mean_pool(fused)))


class NodeHead(Module):
    """Per-node class distribution from the fused embeddings."""

    def __init__(self, d_model: int, n_classes: int, rng, name: str = "node_head"):
        if n_classes < 2:
            raise ConfigError("classification needs at least two classes")
        self.n_classes = n_classes
        self.linear = Linear(d_model, n_classes, rng, name)

    def __call__(self, fused: Tensor) -> Tensor:
        return softmax(self.linear(fused))


class LinkHead(Module):
    """Next-user distribution over the whole user set.

    A single bias-free score per user; users already in the cascade are
    excluded with an additive mask before the softmax.
    """

    def __init__(self, d_model: int, rng, name: str = "link_head"):
        self.linear = Linear(d_model, 1, rng, name, bias=False)

    def __call__(self, fused_all: Tensor, exclude: np.ndarray) -> Tensor:
        exclude = np.asarray(exclude, dtype=bool)
        if exclude.shape != (fused_all.shape[0],):
            raise DataError("exclude must flag each user once")
        if exclude.all():
            raise DataError("every user is already in the cascade; nothing to rank")
        scores = transpose(self.linear(fused_all))  # (1, n_users)
        mask = np.where(exclude, MASK_NEG, 0.0)[None, :]
        return softmax(scores, mask=constant(mask))


def supervised_loss(probs: Tensor, targets) -> Tensor:
    """Cross-entropy of predicted distributions against integer targets."""
    return cross_entropy(probs, targets)


def total_loss(task_loss: Tensor, kinetics_loss: Tensor, lam: float) -> Tensor:
    """L = L_task + lambda * L_kinetics."""
    if lam < 0:
        raise ConfigError("lambda must be non-negative")
    return add(task_loss, scale(kinetics_loss, lam))
