"""Agent-based simulator for competing information spread.

Produces ready-to-train datasets for all three tasks. Each unaware node
flips in a step with probability 1 - exp(-H * dt), where the hazard
H = sum_k beta_k * (# neighbours currently carrying item k); on a flip
the item is drawn proportionally to its share of the hazard.

Instance i draws all of its randomness from default_rng(seed + i), so
corpora are reproducible and extendable without disturbing earlier
instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .errors import ConfigError, DataError
from .graphs import Cascade, CascadeCorpus, PropagationTree, SocialNetwork, TaskDataset

TOPOLOGIES = ("tree", "star", "small-world")
LABEL_RULES = ("balanced", "majority")

_MAX_CASCADE_ATTEMPTS = 50


@dataclass(frozen=True)
class SyntheticConfig:
    """Knobs for the simulator; defaults give a small graph-task corpus."""

    task: str = "graph"
    n_instances: int = 100
    min_nodes: int = 8
    max_nodes: int = 15
    network_size: int = 60
    topology: tuple = ("tree",)
    beta: tuple = (0.4, 0.1)
    dt: float = 1.0
    steps: int = 8
    label_rule: str = "balanced"
    feature_noise: float = 0.0
    label_noise: float = 0.0
    n_seeds: int = 4
    seed: int = 0
    ws_k: int = 4
    ws_p: float = 0.1

    def __post_init__(self):
        if self.task not in ("graph", "node", "link"):
            raise ConfigError(f"unknown task {self.task!r}")
        topo = tuple(self.topology) if not isinstance(self.topology, str) else (self.topology,)
        object.__setattr__(self, "topology", topo)
        unknown = set(topo) - set(TOPOLOGIES)
        if not topo or unknown:
            raise ConfigError(f"topology must be a non-empty mix of {TOPOLOGIES}")
        if self.task == "graph" and not set(topo) <= {"tree", "star"}:
            raise ConfigError("the graph task needs tree-shaped instances; "
                              "small-world topologies cannot be propagation trees")
        if self.label_rule not in LABEL_RULES:
            raise ConfigError(f"label_rule must be one of {LABEL_RULES}")
        beta = tuple(float(b) for b in self.beta)
        object.__setattr__(self, "beta", beta)
        if len(beta) < 2 or any(b < 0 for b in beta) or sum(beta) <= 0:
            raise ConfigError("beta needs at least two non-negative rates, not all zero")
        if self.min_nodes < 2 or self.max_nodes < self.min_nodes:
            raise ConfigError("node count range must satisfy 2 <= min <= max")
        if self.network_size < 2:
            raise ConfigError("network_size must be at least 2")
        if self.n_instances < 1 or self.steps < 1:
            raise ConfigError("n_instances and steps must be positive")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.feature_noise < 0 or not 0 <= self.label_noise <= 1:
            raise ConfigError("feature_noise must be >= 0 and label_noise in [0, 1]")
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be positive")


# ---------------------------------------------------------------------------
# Topology builders. Each returns an undirected edge list on nodes 0..n-1.

def _tree_edges(n: int, rng) -> list:
    return [(int(rng.integers(0, i)), i) for i in range(1, n)]


def _star_edges(n: int) -> list:
    return [(0, leaf) for leaf in range(1, n)]


def _small_world_edges(n: int, cfg: SyntheticConfig, rng) -> list:
    k = min(cfg.ws_k, n - 1)
    graph = nx.watts_strogatz_graph(n, max(2, k - k % 2), cfg.ws_p,
                                    seed=int(rng.integers(0, 2**31)))
    return [(int(u), int(v)) for u, v in graph.edges()]


def _build_edges(name: str, n: int, cfg: SyntheticConfig, rng) -> list:
    if name == "tree":
        return _tree_edges(n, rng)
    if name == "star":
        return _star_edges(n)
    return _small_world_edges(n, cfg, rng)


def _edges_to_adjacency(n: int, edges) -> np.ndarray:
    adj = np.zeros((n, n))
    for u, v in edges:
        if u != v:
            adj[u, v] = adj[v, u] = 1.0
    return adj


# ---------------------------------------------------------------------------
# Core Monte Carlo dynamics.

def simulate_process(adjacency: np.ndarray, seed_items: dict, beta, steps: int,
                     dt: float, rng) -> tuple:
    """Run the discrete competing-spread process.

    `seed_items` maps node index -> item index; those nodes start active
    at time 0. Returns (state, time): state[v] is 0 for never-activated
    or 1 + item index, time[v] is the activation step (-1 if never).
    """
    n = adjacency.shape[0]
    beta = np.asarray(beta, dtype=np.float64)
    state = np.zeros(n, dtype=np.int64)
    when = np.full(n, -1, dtype=np.int64)
    for node, item in seed_items.items():
        state[node] = item + 1
        when[node] = 0
    n_items = beta.shape[0]
    for t in range(1, steps + 1):
        # synchronous update: pressures come from the state at t - 1
        carrying = np.stack([(state == k + 1).astype(np.float64) for k in range(n_items)])
        counts = carrying @ adjacency.T  # (K, n) infected-neighbour counts
        hazards = beta[:, None] * counts
        total = hazards.sum(axis=0)
        unaware = state == 0
        flip = unaware & (rng.uniform(size=n) < 1.0 - np.exp(-total * dt))
        for v in np.flatnonzero(flip):
            probs = hazards[:, v] / total[v]
            item = int(rng.choice(n_items, p=probs))
            state[v] = item + 1
            when[v] = t
    return state, when


def _graph_features(state, when, steps, n_items, noise, rng) -> np.ndarray:
    """One-hot terminal state plus the normalized activation time."""
    n = state.shape[0]
    feats = np.zeros((n, n_items + 2))
    feats[np.arange(n), state] = 1.0
    feats[:, -1] = np.where(when >= 0, when / steps, 0.0)
    if noise > 0:
        feats = feats + rng.normal(0.0, noise, size=feats.shape)
    return feats


def _node_features(state, when, steps, n_items, noise, rng) -> np.ndarray:
    """Item-blind variant: only aware/unaware and the activation time show
    up, so recovering the item requires the network structure."""
    n = state.shape[0]
    feats = np.zeros((n, n_items + 2))
    feats[:, 0] = (state == 0).astype(np.float64)
    feats[:, 1] = (state > 0).astype(np.float64)
    feats[:, -1] = np.where(when >= 0, when / steps, 0.0)
    if noise > 0:
        feats = feats + rng.normal(0.0, noise, size=feats.shape)
    return feats


def _choose_item(rule: str, beta, rng) -> int:
    if rule == "balanced":
        return int(rng.integers(0, len(beta)))
    weights = np.asarray(beta) / sum(beta)
    return int(rng.choice(len(beta), p=weights))


def _maybe_flip(label: int, n_classes: int, noise: float, rng) -> int:
    if noise > 0 and rng.uniform() < noise:
        return int((label + 1 + rng.integers(0, n_classes - 1)) % n_classes)
    return label


# ---------------------------------------------------------------------------
# Task-level generators.

def _make_tree(cfg: SyntheticConfig, index: int) -> PropagationTree:
    rng = np.random.default_rng(cfg.seed + index)
    n = int(rng.integers(cfg.min_nodes, cfg.max_nodes + 1))
    name = cfg.topology[int(rng.integers(0, len(cfg.topology)))]
    edges = _build_edges(name, n, cfg, rng)
    adjacency = _edges_to_adjacency(n, edges)
    item = _choose_item(cfg.label_rule, cfg.beta, rng)
    state, when = simulate_process(adjacency, {0: item}, cfg.beta, cfg.steps, cfg.dt, rng)
    feats = _graph_features(state, when, cfg.steps, len(cfg.beta), cfg.feature_noise, rng)
    label = _maybe_flip(item, len(cfg.beta), cfg.label_noise, rng)
    ids = tuple(f"n{v}" for v in range(n))
    tree_edges = tuple((f"n{u}", f"n{v}") for u, v in edges)
    return PropagationTree(ids, "n0", tree_edges, feats, label, tree_id=f"g{index}")


def _make_network(cfg: SyntheticConfig) -> SocialNetwork:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.network_size
    name = cfg.topology[int(rng.integers(0, len(cfg.topology)))]
    edges = _build_edges(name, n, cfg, rng)
    adjacency = _edges_to_adjacency(n, edges)
    n_items = len(cfg.beta)
    n_seeds = min(cfg.n_seeds, n)
    seed_nodes = rng.choice(n, size=n_seeds, replace=False)
    if cfg.label_rule == "balanced":
        items = {int(v): i % n_items for i, v in enumerate(seed_nodes)}
    else:
        items = {int(v): _choose_item("majority", cfg.beta, rng) for v in seed_nodes}
    state, when = simulate_process(adjacency, items, cfg.beta, cfg.steps, cfg.dt, rng)
    feats = _node_features(state, when, cfg.steps, n_items, cfg.feature_noise, rng)
    labels = {}
    for v in np.flatnonzero(state > 0):
        # adopters of the first item are the positive class
        label = 1 if state[v] == 1 else 0
        labels[f"u{v}"] = _maybe_flip(label, 2, cfg.label_noise, rng)
    ids = tuple(f"u{v}" for v in range(n))
    relations = (tuple((f"u{u}", f"u{v}") for u, v in edges),)
    return SocialNetwork(ids, relations, feats, labels)


def _make_corpus(cfg: SyntheticConfig) -> CascadeCorpus:
    net_rng = np.random.default_rng(cfg.seed)
    n = cfg.network_size
    name = cfg.topology[int(net_rng.integers(0, len(cfg.topology)))]
    edges = _build_edges(name, n, cfg, net_rng)
    adjacency = _edges_to_adjacency(n, edges)
    cascades = []
    for i in range(cfg.n_instances):
        rng = np.random.default_rng(cfg.seed + 1 + i)
        for attempt in range(_MAX_CASCADE_ATTEMPTS):
            start = int(rng.integers(0, n))
            item = _choose_item(cfg.label_rule, cfg.beta, rng)
            state, when = simulate_process(adjacency, {start: item}, cfg.beta,
                                           cfg.steps, cfg.dt, rng)
            active = np.flatnonzero(when >= 0)
            if active.size >= 2:
                order = active[np.lexsort((active, when[active]))]
                events = tuple((f"u{v}", float(when[v])) for v in order)
                cascades.append(Cascade(events))
                break
        else:
            raise DataError(
                f"cascade {i}: no spread after {_MAX_CASCADE_ATTEMPTS} attempts; "
                "raise beta or steps")
    ids = tuple(f"u{v}" for v in range(n))
    relations = (tuple((f"u{u}", f"u{v}") for u, v in edges),)
    feats = np.zeros((n, len(cfg.beta) + 2))
    network = SocialNetwork(ids, relations, feats)
    return CascadeCorpus(tuple(cascades), network)


def simulate_synthetic(cfg: SyntheticConfig) -> TaskDataset:
    """Generate a full dataset for cfg.task."""
    if cfg.task == "graph":
        trees = tuple(_make_tree(cfg, i) for i in range(cfg.n_instances))
        return TaskDataset(task="graph", trees=trees)
    if cfg.task == "node":
        network = _make_network(cfg)
        if not network.labels:
            raise DataError("simulation produced no activated nodes to label; "
                            "raise beta or steps")
        return TaskDataset(task="node", network=network)
    return TaskDataset(task="link", corpus=_make_corpus(cfg))
