"""Neural building blocks: feature projections, the attention-based
context encoder, and the message-passing structure encoder.

The context encoder treats nodes as an unordered token set (no positional
encoding), so it is permutation equivariant by construction. The structure
encoder mixes each node with the gated mean of its typed neighbourhoods
and keeps a residual path, so after L layers a node has seen at most its
L-hop ball.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .tensor import (
    NONLINEARITIES,
    Parameter,
    Tensor,
    add,
    concat_cols,
    constant,
    gather_rows,
    layer_norm,
    matmul,
    mul_const,
    mul_scalar,
    scaled_dot_attention,
    sigmoid,
    slice_cols,
)


@dataclass(frozen=True)
class EncoderConfig:
    """Shared hyper-parameters for both encoders."""

    d_model: int = 32
    n_heads: int = 4
    context_depth: int = 2
    graph_depth: int = 2
    prop_depth: int = 2
    d_ff: int = 0  # 0 means 2 * d_model
    activation: str = "relu"

    def __post_init__(self):
        if self.d_model < 1 or self.n_heads < 1 or self.context_depth < 0 \
                or self.graph_depth < 0 or self.prop_depth < 0:
            raise ConfigError("encoder dimensions must be positive")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model ({self.d_model}) must be divisible by n_heads ({self.n_heads})")
        if self.activation not in NONLINEARITIES:
            raise ConfigError(
                f"unknown activation {self.activation!r}; choose from {sorted(NONLINEARITIES)}")
        if self.d_ff == 0:
            object.__setattr__(self, "d_ff", 2 * self.d_model)
        if self.d_ff < 1:
            raise ConfigError("d_ff must be positive")


class Module:
    """Minimal parameter container: collects Parameter attributes
    recursively, deduplicating shared submodules."""

    def parameters(self) -> list:
        seen: set = set()
        out: list = []

        def visit(obj):
            if isinstance(obj, Parameter):
                if id(obj) not in seen:
                    seen.add(id(obj))
                    out.append(obj)
            elif isinstance(obj, Module):
                for value in vars(obj).values():
                    visit(value)
            elif isinstance(obj, (list, tuple)):
                for item in obj:
                    visit(item)
            elif isinstance(obj, dict):
                for item in obj.values():
                    visit(item)

        visit(self)
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()


def _uniform_init(rng, d_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(d_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng, name: str, bias: bool = True):
        self.W = Parameter(_uniform_init(rng, d_in, (d_in, d_out)), name=f"{name}.W")
        self.b = Parameter(np.zeros(d_out), name=f"{name}.b") if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.W)
        return add(y, self.b) if self.b is not None else y


class LayerNorm(Module):
    def __init__(self, d: int, name: str):
        self.gain = Parameter(np.ones(d), name=f"{name}.gain")
        self.bias = Parameter(np.zeros(d), name=f"{name}.bias")

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias)


class MultiHeadAttention(Module):
    """Self-attention over node tokens, assembled from 2-D primitives by
    slicing the projected Q/K/V into per-head column blocks."""

    def __init__(self, d_model: int, n_heads: int, rng, name: str):
        if d_model % n_heads != 0:
            raise ConfigError("d_model must be divisible by n_heads")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.wq = Linear(d_model, d_model, rng, f"{name}.q")
        self.wk = Linear(d_model, d_model, rng, f"{name}.k")
        self.wv = Linear(d_model, d_model, rng, f"{name}.v")
        self.wo = Linear(d_model, d_model, rng, f"{name}.o")

    def __call__(self, x: Tensor, key_mask=None) -> Tensor:
        q, k, v = self.wq(x), self.wk(x), self.wv(x)
        heads = []
        for h in range(self.n_heads):
            lo, hi = h * self.d_head, (h + 1) * self.d_head
            heads.append(scaled_dot_attention(
                slice_cols(q, lo, hi), slice_cols(k, lo, hi), slice_cols(v, lo, hi),
                key_mask=key_mask))
        return self.wo(concat_cols(heads))


class TransformerBlock(Module):
    """Pre-norm residual block: attention then a two-layer feed-forward."""

    def __init__(self, cfg: EncoderConfig, rng, name: str):
        d = cfg.d_model
        self.ln1 = LayerNorm(d, f"{name}.ln1")
        self.attn = MultiHeadAttention(d, cfg.n_heads, rng, f"{name}.attn")
        self.ln2 = LayerNorm(d, f"{name}.ln2")
        self.ff1 = Linear(d, cfg.d_ff, rng, f"{name}.ff1")
        self.ff2 = Linear(cfg.d_ff, d, rng, f"{name}.ff2")
        self.act = NONLINEARITIES[cfg.activation]

    def __call__(self, x: Tensor, key_mask=None) -> Tensor:
        h = add(x, self.attn(self.ln1(x), key_mask=key_mask))
        return add(h, self.ff2(self.act(self.ff1(self.ln2(h)))))


class ContextEncoder(Module):
    """Stack of pre-norm blocks over the node token set, closed by a
    final normalization."""

    def __init__(self, cfg: EncoderConfig, rng, name: str = "context"):
        self.blocks = [TransformerBlock(cfg, rng, f"{name}.block{i}")
                       for i in range(cfg.context_depth)]
        self.ln_out = LayerNorm(cfg.d_model, f"{name}.ln_out")

    def __call__(self, x: Tensor, key_mask=None) -> Tensor:
        h = x
        for block in self.blocks:
            h = block(h, key_mask=key_mask)
        return self.ln_out(h)


class GraphLayer(Module):
    """One round of gated neighbourhood averaging with a residual path.

    out_i = E_i + act(LN(W m_i)) where
    m_i = (E_i + sum_r gate_r * sum_{j in N_r(i)} E_j) / (1 + sum_r |N_r(i)|).

    The denominator counts neighbours, not gate mass, so a closed gate
    dilutes rather than renormalizes its relation's contribution.
    """

    def __init__(self, d: int, n_relations: int, activation: str, rng, name: str):
        self.W = Linear(d, d, rng, f"{name}.W", bias=False)
        self.ln = LayerNorm(d, f"{name}.ln")
        self.act = NONLINEARITIES[activation]
        self.gate_raw = [Parameter(np.zeros((1, 1)), name=f"{name}.gate{r}")
                         for r in range(n_relations)]

    def __call__(self, E: Tensor, adjacencies, inv_counts) -> Tensor:
        mixed = E
        for A, raw in zip(adjacencies, self.gate_raw):
            gated = mul_scalar(matmul(A, E), sigmoid(raw))
            mixed = add(mixed, gated)
        mean = mul_const(mixed, inv_counts)
        return add(E, self.act(self.ln(self.W(mean))))


class GraphEncoder(Module):
    """Depth-L stack of GraphLayer over per-relation adjacencies."""

    def __init__(self, cfg: EncoderConfig, n_relations: int, rng, name: str = "graph"):
        if n_relations < 1:
            raise ConfigError("the structure encoder needs at least one relation")
        self.n_relations = n_relations
        self.layers = [GraphLayer(cfg.d_model, n_relations, cfg.activation, rng,
                                  f"{name}.layer{i}")
                       for i in range(cfg.graph_depth)]

    @staticmethod
    def prepare(relation_adjacencies) -> tuple:
        """Wrap per-relation (n, n) arrays as constants and precompute the
        per-node 1 / (1 + total neighbour count) column."""
        mats = [np.asarray(A, dtype=np.float64) for A in relation_adjacencies]
        if not mats:
            raise DataError("at least one relation adjacency is required")
        n = mats[0].shape[0]
        for A in mats:
            if A.shape != (n, n):
                raise DataError("relation adjacencies must share one square shape")
        counts = 1.0 + sum(A.sum(axis=1) for A in mats)
        inv_counts = (1.0 / counts)[:, None]
        return [constant(A) for A in mats], inv_counts

    def __call__(self, E: Tensor, adjacencies, inv_counts) -> Tensor:
        if len(adjacencies) != self.n_relations:
            raise DataError(
                f"expected {self.n_relations} relation adjacencies, got {len(adjacencies)}")
        for layer in self.layers:
            E = layer(E, adjacencies, inv_counts)
        return E


class FeatureProjection(Module):
    """Affine lift of raw node features into the model width."""

    def __init__(self, d_in: int, d_model: int, rng, name: str = "project"):
        self.linear = Linear(d_in, d_model, rng, name)

    def __call__(self, x) -> Tensor:
        t = x if isinstance(x, Tensor) else constant(np.asarray(x, dtype=np.float64))
        return self.linear(t)


class UserEmbeddingProjection(Module):
    """Per-user learned vectors smoothed once over the social graph.

    x_u = (e_u + sum_{v in N(u)} e_v) / (1 + |N(u)|), computed for the
    full user table; callers gather the rows a given view needs.
    """

    def __init__(self, n_users: int, d_model: int, adjacency: np.ndarray, rng,
                 name: str = "users"):
        if n_users < 1:
            raise ConfigError("need at least one user")
        adjacency = np.asarray(adjacency, dtype=np.float64)
        if adjacency.shape != (n_users, n_users):
            raise DataError("adjacency must be (n_users, n_users)")
        self.table = Parameter(_uniform_init(rng, d_model, (n_users, d_model)),
                               name=f"{name}.table")
        self._smoother_source = adjacency
        smoother = adjacency + np.eye(n_users)
        smoother /= smoother.sum(axis=1, keepdims=True)
        self._smoother = smoother

    def __call__(self, rows=None) -> Tensor:
        smoothed = matmul(constant(self._smoother), self.table)
        if rows is None:
            return smoothed
        return gather_rows(smoothed, np.asarray(rows, dtype=np.int64))
