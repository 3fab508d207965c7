"""The propagation pathway: hop-indexed masking, the step-shared
propagation encoder, per-node state distributions, learned spread rates,
and the kinetics-consistency loss.

The hop distance from the ego acts as a discrete activation time. At
step t, exactly the nodes within t hops are visible; the rest are zeroed
out and excluded from attention keys. One encoder (shared weights across
steps) reads each partially revealed view plus a learned embedding of t,
and two small heads turn its outputs into a per-node state trajectory
and a per-instance rate estimate. The kinetics loss then penalizes the
gap between the trajectory's forward differences and the continuous
dynamics evaluated on the trajectory itself.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .encoders import EncoderConfig, LayerNorm, Linear, Module, TransformerBlock
from .errors import ConfigError, DataError
from .graphs import UNREACHABLE
from .kinetics import VARIANTS
from .tensor import (
    Parameter,
    Tensor,
    add,
    constant,
    gather_rows,
    matmul,
    mean_pool,
    mul,
    mul_const,
    reshape,
    scale,
    slice_cols,
    softmax,
    softplus,
    sub,
    sum_of_squares,
)

DEFAULT_T_MAX = 6


class MaskSchedule:
    """Visibility masks m^(t) with m_j^(t) = 1 iff hop_j <= t.

    The schedule runs t = 0 .. t_final where t_final is the largest
    finite hop, clipped to `t_max` (with a warning) when the view is
    deeper than the time-embedding table.
    """

    def __init__(self, hop: np.ndarray, t_max: int | None = None):
        hop = np.asarray(hop, dtype=np.int64)
        if hop.ndim != 1 or hop.size == 0:
            raise DataError("hop distances must form a non-empty vector")
        if (hop == 0).sum() < 1:
            raise DataError("the ego (hop 0) is missing from the view")
        self.hop = hop
        finite = hop[hop < UNREACHABLE]
        horizon = int(finite.max()) if finite.size else 0
        if t_max is not None and horizon > t_max:
            warnings.warn(
                f"view depth {horizon} exceeds the {t_max}-step schedule; "
                "later hops stay masked", RuntimeWarning, stacklevel=2)
            horizon = t_max
        self.t_final = horizon

    @property
    def n_steps(self) -> int:
        """Number of forward differences the schedule supports."""
        return self.t_final

    def visible(self, t: int) -> np.ndarray:
        if t < 0:
            raise DataError("mask step must be non-negative")
        return self.hop <= t

    def masks(self) -> list:
        return [self.visible(t) for t in range(self.t_final + 1)]


def mask_embeddings(H: Tensor, visible: np.ndarray) -> Tensor:
    """Zero the rows of hidden nodes; they stay as placeholder tokens."""
    col = np.asarray(visible, dtype=np.float64)[:, None]
    if col.shape[0] != H.shape[0]:
        raise DataError("mask length must match the token count")
    return mul_const(H, col)


class PropagationEncoder(Module):
    """Step-shared transformer over partially revealed views.

    z^(t) = LN(Blocks(m^(t) * H + tau_t)) with hidden tokens removed from
    the attention keys. The tau table holds t_max + 1 rows; step indices
    past the table reuse its last row (the schedule warns when clipping).
    """

    def __init__(self, cfg: EncoderConfig, rng, t_max: int = DEFAULT_T_MAX,
                 name: str = "prop"):
        if t_max < 0:
            raise ConfigError("t_max must be non-negative")
        self.t_max = t_max
        d = cfg.d_model
        bound = 1.0 / np.sqrt(d)
        self.tau = Parameter(rng.uniform(-bound, bound, size=(t_max + 1, d)),
                             name=f"{name}.tau")
        self.blocks = [TransformerBlock(cfg, rng, f"{name}.block{i}")
                       for i in range(cfg.prop_depth)]
        self.ln_out = LayerNorm(d, f"{name}.ln_out")

    def schedule(self, hop: np.ndarray) -> MaskSchedule:
        return MaskSchedule(hop, t_max=self.t_max)

    def encode_step(self, H: Tensor, visible: np.ndarray, t: int) -> Tensor:
        idx = min(t, self.t_max)
        tau_t = reshape(gather_rows(self.tau, np.array([idx])), (H.shape[1],))
        h = add(mask_embeddings(H, visible), tau_t)
        for block in self.blocks:
            h = block(h, key_mask=visible)
        return self.ln_out(h)

    def encode(self, H: Tensor, schedule: MaskSchedule) -> list:
        """All step embeddings z^(0) .. z^(t_final)."""
        return [self.encode_step(H, schedule.visible(t), t)
                for t in range(schedule.t_final + 1)]


class StateHead(Module):
    """Per-node distribution over {unaware, item 1, ..., item K}."""

    def __init__(self, d_model: int, n_items: int, rng, name: str = "state"):
        if n_items < 1:
            raise ConfigError("need at least one competing item")
        self.n_items = n_items
        self.linear = Linear(d_model, n_items + 1, rng, name)

    def __call__(self, z: Tensor) -> Tensor:
        return softmax(self.linear(z))


class BetaHead(Module):
    """Per-instance spread rates from the final step embedding:
    softplus(linear(mean over nodes of z^(T)))."""

    def __init__(self, d_model: int, n_items: int, rng, name: str = "beta"):
        self.linear = Linear(d_model, n_items, rng, name)

    def __call__(self, z_final: Tensor) -> Tensor:
        return softplus(self.linear(mean_pool(z_final)))


def forward_difference(series: list) -> list:
    """Discrete derivatives: [x_1 - x_0, ..., x_T - x_{T-1}]."""
    if len(series) < 2:
        return []
    return [sub(series[t + 1], series[t]) for t in range(len(series) - 1)]


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(np.asarray(x, dtype=np.float64))


def _rhs(P: Tensor, A: np.ndarray, beta_rep: Tensor, variant: str,
         n_items: int) -> Tensor:
    """Continuous-dynamics increment for the item columns of one state
    matrix P (n, 1 + K), built from differentiable pieces."""
    n = P.shape[0]
    U = slice_cols(P, 0, 1)
    I = slice_cols(P, 1, 1 + n_items)
    if variant == "neighbor":
        pressure = matmul(constant(A), I)
    elif variant == "literal":
        degree = A.sum(axis=1)[:, None]
        pressure = mul_const(I, degree)
    else:  # regular
        dbar = A.sum() / A.shape[0]
        pressure = matmul(constant(np.ones((n, 1))), scale(mean_pool(I), dbar))
    U_rep = matmul(U, constant(np.ones((1, n_items))))
    return mul(mul(U_rep, beta_rep), pressure)


def kinetic_loss(states, adjacency, beta, *, dt: float = 1.0,
                 variant: str = "neighbor", reachable=None) -> Tensor:
    """Sum of squared kinetics residuals over time steps and nodes.

    `states` is a sequence of (n, 1 + K) state matrices for t = 0 .. T
    (tensors or arrays); `beta` is the (1, K) rate row. For each step the
    forward difference of every column is compared with dt times the
    dynamics evaluated at the step's start: the item columns against their
    adoption rates, and the unaware column against the conservation row
    dU/dt = -sum_k dI_k/dt, so corrupting any constrained state entry is
    visible in the loss. Rows outside `reachable` are dropped: the
    dynamics say nothing about nodes the ego cannot reach.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown kinetic variant {variant!r}; choose from {VARIANTS}")
    states = [_as_tensor(s) for s in states]
    if not states:
        raise DataError("kinetic loss needs at least one state matrix")
    n, width = states[0].shape
    n_items = width - 1
    if n_items < 1:
        raise DataError("state matrices need an unaware column plus item columns")
    for s in states:
        if s.shape != (n, width):
            raise DataError("state matrices must share one shape")
    A = np.asarray(adjacency, dtype=np.float64)
    if A.shape != (n, n):
        raise DataError("adjacency must be (n, n)")
    beta = _as_tensor(beta)
    if beta.shape != (1, n_items):
        raise DataError(f"beta must have shape (1, {n_items})")
    if reachable is None:
        reach_col = np.ones((n, 1))
    else:
        reachable = np.asarray(reachable)
        if reachable.shape != (n,):
            raise DataError("reachable must be a length-n vector")
        reach_col = reachable.astype(np.float64)[:, None]

    beta_rep = matmul(constant(np.ones((n, 1))), beta)
    sum_items = constant(np.ones((n_items, 1)))
    total = constant(np.array(0.0))
    for t in range(len(states) - 1):
        rhs = _rhs(states[t], A, beta_rep, variant, n_items)
        I_now = slice_cols(states[t], 1, 1 + n_items)
        I_next = slice_cols(states[t + 1], 1, 1 + n_items)
        residual_items = sub(sub(I_next, I_now), scale(rhs, dt))
        U_now = slice_cols(states[t], 0, 1)
        U_next = slice_cols(states[t + 1], 0, 1)
        residual_u = add(sub(U_next, U_now), scale(matmul(rhs, sum_items), dt))
        total = add(total, sum_of_squares(mul_const(residual_items, reach_col)))
        total = add(total, sum_of_squares(mul_const(residual_u, reach_col)))
    return total


@dataclass(frozen=True)
class PredictedTrajectory:
    """Numpy snapshot of one pathway run: per-step state distributions
    and the learned rates."""

    states: np.ndarray  # (T + 1, n, 1 + K)
    beta: np.ndarray  # (K,)
    variant: str = "neighbor"
    dt: float = 1.0

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.float64)
        if states.ndim != 3:
            raise DataError("trajectory states must be (T + 1, n, 1 + K)")
        beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        if beta.shape[0] != states.shape[2] - 1:
            raise DataError("one rate per item column is required")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "beta", beta)


def export_predicted_trajectory(path: str, trajectory: PredictedTrajectory) -> None:
    """Dump a pathway trajectory as CSV rows `t,node,U,I1,...,IK`."""
    from .kinetics import export_trajectory

    export_trajectory(path, trajectory.states[:, :, 0], trajectory.states[:, :, 1:])


def run_pathway(H: Tensor, hop: np.ndarray, encoder: PropagationEncoder,
                state_head: StateHead, beta_head: BetaHead) -> tuple:
    """Full pass: (step embeddings, state matrices, rate row)."""
    schedule = encoder.schedule(hop)
    zs = encoder.encode(H, schedule)
    states = [state_head(z) for z in zs]
    beta_hat = beta_head(zs[-1])
    return zs, states, beta_hat
