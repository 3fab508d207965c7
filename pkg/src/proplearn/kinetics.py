"""Markov-chain kinetics of competing information spread.

Each node carries a state distribution (U, I_1, ..., I_K): unaware, or
activated by item k. Aware neighbours convert unaware mass at rates
beta_k, and whatever leaves U lands in the matching I_k, so the per-node
distribution is conserved exactly in the continuous system.

Three right-hand-side variants:
  neighbor  dI[v,k] = U[v] * beta[k] * sum_j A[v,j] * I[j,k]
  literal   dI[v,k] = U[v] * beta[k] * I[v,k] * deg(v)
  regular   dI[v,k] = U[v] * beta[k] * dbar * mean_j I[j,k]
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DataError, NumericError

VARIANTS = ("neighbor", "literal", "regular")

_SIMPLEX_TOL = 1e-6


def validate_states(U: np.ndarray, I: np.ndarray) -> None:
    """U is (n,), I is (n, K); rows must lie on the probability simplex."""
    U = np.asarray(U, dtype=np.float64)
    I = np.asarray(I, dtype=np.float64)
    if U.ndim != 1 or I.ndim != 2 or I.shape[0] != U.shape[0]:
        raise DataError("state shapes must be U: (n,) and I: (n, K)")
    if not (np.isfinite(U).all() and np.isfinite(I).all()):
        raise DataError("non-finite state value")
    if (U < -_SIMPLEX_TOL).any() or (I < -_SIMPLEX_TOL).any():
        raise DataError("negative state mass")
    total = U + I.sum(axis=1)
    if np.abs(total - 1.0).max() > _SIMPLEX_TOL:
        raise DataError("per-node state mass must sum to 1")


def validate_adjacency(adjacency: np.ndarray, n: int | None = None) -> np.ndarray:
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise DataError("adjacency must be a square matrix")
    if n is not None and adjacency.shape[0] != n:
        raise DataError("adjacency size does not match the state vectors")
    if not np.isfinite(adjacency).all():
        raise DataError("non-finite adjacency entry")
    if (adjacency < 0).any():
        raise DataError("adjacency weights must be non-negative")
    return adjacency


def kinetic_derivatives(U, I, adjacency, beta, variant: str = "neighbor"):
    """Time derivatives (dU, dI) of the competing-spread kinetics.

    dI[v, k] is the variant-specific activation pressure on node v from
    item k; dU[v] = -sum_k dI[v, k], so d(U + sum_k I_k)/dt = 0 per node.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown kinetic variant {variant!r}; choose from {VARIANTS}")
    U = np.asarray(U, dtype=np.float64)
    I = np.asarray(I, dtype=np.float64)
    validate_states(U, I)
    adjacency = validate_adjacency(adjacency, U.shape[0])
    beta = np.asarray(beta, dtype=np.float64)
    if beta.ndim != 1 or beta.shape[0] != I.shape[1]:
        raise DataError("beta must hold one rate per competing item")
    if (beta < 0).any():
        raise DataError("activation rates must be non-negative")

    if variant == "neighbor":
        pressure = adjacency @ I
    elif variant == "literal":
        degree = adjacency.sum(axis=1)
        pressure = degree[:, None] * I
    else:  # regular: mean-degree mean-field closure
        dbar = adjacency.sum() / adjacency.shape[0]
        pressure = np.broadcast_to(dbar * I.mean(axis=0), I.shape).copy()

    dI = U[:, None] * beta[None, :] * pressure
    dU = -dI.sum(axis=1)
    return dU, dI


def euler_step(U, I, adjacency, beta, dt: float = 1.0, variant: str = "neighbor"):
    """One explicit Euler step followed by clamping to [0, inf) and
    renormalizing each node back onto the simplex."""
    dU, dI = kinetic_derivatives(U, I, adjacency, beta, variant)
    U_next = np.maximum(np.asarray(U, dtype=np.float64) + dt * dU, 0.0)
    I_next = np.maximum(np.asarray(I, dtype=np.float64) + dt * dI, 0.0)
    total = U_next + I_next.sum(axis=1)
    if (total <= 0).any():
        raise NumericError("state mass vanished during integration")
    U_next = U_next / total
    I_next = I_next / total[:, None]
    return U_next, I_next


def integrate(U0, I0, adjacency, beta, steps: int, dt: float = 1.0,
              variant: str = "neighbor"):
    """Roll the kinetics forward `steps` Euler steps.

    Returns (Us, Is) with Us of shape (steps + 1, n) and Is of shape
    (steps + 1, n, K); index 0 is the initial condition.
    """
    if steps < 0:
        raise ConfigError("steps must be non-negative")
    if dt <= 0:
        raise ConfigError("dt must be positive")
    U = np.asarray(U0, dtype=np.float64).copy()
    I = np.asarray(I0, dtype=np.float64).copy()
    validate_states(U, I)
    Us = np.empty((steps + 1,) + U.shape, dtype=np.float64)
    Is = np.empty((steps + 1,) + I.shape, dtype=np.float64)
    Us[0], Is[0] = U, I
    for t in range(steps):
        U, I = euler_step(U, I, adjacency, beta, dt=dt, variant=variant)
        Us[t + 1], Is[t + 1] = U, I
    return Us, Is


def seed_states(n: int, seeds: dict, n_items: int = 2):
    """Initial condition with the given nodes fully activated.

    `seeds` maps node index -> item index; everyone else starts unaware.
    """
    U = np.ones(n, dtype=np.float64)
    I = np.zeros((n, n_items), dtype=np.float64)
    for node, item in seeds.items():
        if not 0 <= node < n:
            raise DataError(f"seed node {node} out of range")
        if not 0 <= item < n_items:
            raise DataError(f"seed item {item} out of range")
        U[node] = 0.0
        I[node, item] = 1.0
    return U, I


def export_trajectory(path: str, Us: np.ndarray, Is: np.ndarray) -> None:
    """Write the rollout as CSV rows `t,node,U,I1,...,IK`."""
    steps, n = Us.shape
    n_items = Is.shape[2]
    header = "t,node,U," + ",".join(f"I{k + 1}" for k in range(n_items))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for t in range(steps):
            for v in range(n):
                cells = [str(t), str(v), repr(float(Us[t, v]))]
                cells.extend(repr(float(Is[t, v, k])) for k in range(n_items))
                fh.write(",".join(cells) + "\n")
