"""Domain types for the three task input shapes and the shared
information-propagation view.

All containers are frozen after construction (feature arrays are made
read-only) so instances can be shared freely across workers.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

# Hop value for nodes the ego cannot reach. Strictly larger than any node
# count we will ever see, so `hop <= t` stays valid without special cases.
UNREACHABLE = 2**31 - 1


def _freeze(array: np.ndarray) -> np.ndarray:
    array = np.asarray(array, dtype=np.float64)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class PropagationTree:
    """A reply/retweet tree rooted at the source post.

    Invariants: exactly one root, every other node has exactly one parent,
    no cycles, and one feature row per node.
    """

    node_ids: tuple
    root: object
    edges: tuple  # (parent_id, child_id) pairs
    features: np.ndarray
    label: int
    tree_id: str = ""

    def __post_init__(self):
        ids = list(self.node_ids)
        id_set = set(ids)
        if len(id_set) != len(ids):
            raise DataError("duplicate node ids in propagation tree")
        if self.root not in id_set:
            raise DataError("root is not a node of the tree")
        parents: dict = {}
        for parent, child in self.edges:
            if parent not in id_set or child not in id_set:
                raise DataError(f"edge ({parent}, {child}) references unknown node")
            if child in parents:
                raise DataError(f"node {child} has more than one parent")
            parents[child] = parent
        if self.root in parents:
            raise DataError("root must not have a parent")
        for node in ids:
            if node != self.root and node not in parents:
                raise DataError(f"non-root node {node} has no parent")
        # One parent per node and a single parentless root rule out all
        # cycles except ones detached from the root; walking up finds those.
        for node in ids:
            seen = set()
            while node != self.root:
                if node in seen:
                    raise DataError("cycle detected in propagation tree")
                seen.add(node)
                node = parents[node]
        feats = _freeze(self.features)
        if feats.ndim != 2 or feats.shape[0] != len(ids):
            raise DataError("feature matrix must have one row per node")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "node_ids", tuple(ids))
        object.__setattr__(self, "edges", tuple((p, c) for p, c in self.edges))

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)


@dataclass(frozen=True)
class SocialNetwork:
    """A user network with R typed edge sets and partial node labels."""

    node_ids: tuple
    relations: tuple  # one tuple of (u, v) pairs per relation type
    features: np.ndarray
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = tuple(self.node_ids)
        id_set = set(ids)
        if len(id_set) != len(ids):
            raise DataError("duplicate node ids in social network")
        rels = tuple(tuple(edges) for edges in self.relations)
        if len(rels) < 1:
            raise DataError("a social network needs at least one relation type")
        for r, edges in enumerate(rels):
            for u, v in edges:
                if u not in id_set or v not in id_set:
                    raise DataError(f"relation {r} edge ({u}, {v}) references unknown node")
        if not set(self.labels).issubset(id_set):
            raise DataError("labeled nodes must be a subset of the node set")
        feats = _freeze(self.features)
        if feats.ndim != 2 or feats.shape[0] != len(ids):
            raise DataError("feature matrix must have one row per node")
        object.__setattr__(self, "node_ids", ids)
        object.__setattr__(self, "relations", rels)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", dict(self.labels))

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def n_relations(self) -> int:
        return len(self.relations)

    def index_of(self, node_id) -> int:
        try:
            return self.node_ids.index(node_id)
        except ValueError:
            raise DataError(f"unknown node id {node_id!r}") from None


@dataclass(frozen=True)
class Cascade:
    """An ordered activation sequence: (user id, timestamp seconds)."""

    events: tuple

    def __post_init__(self):
        events = tuple((u, float(t)) for u, t in self.events)
        if len(events) < 2:
            raise DataError("a cascade needs at least two events")
        users = [u for u, _ in events]
        if len(set(users)) != len(users):
            raise DataError("duplicate user within a cascade")
        times = [t for _, t in events]
        if any(b < a for a, b in zip(times, times[1:])):
            raise DataError("cascade timestamps must be non-decreasing")
        object.__setattr__(self, "events", events)

    @property
    def users(self) -> tuple:
        return tuple(u for u, _ in self.events)

    def __len__(self) -> int:
        return len(self.events)


@dataclass(frozen=True)
class CascadeCorpus:
    """Historical cascades plus the user network they spread over."""

    cascades: tuple
    network: SocialNetwork

    def __post_init__(self):
        cascades = tuple(self.cascades)
        known = set(self.network.node_ids)
        for cascade in cascades:
            missing = set(cascade.users) - known
            if missing:
                raise DataError(f"cascade users missing from the network: {sorted(missing)!r}")
        object.__setattr__(self, "cascades", cascades)


@dataclass(frozen=True)
class TaskDataset:
    """Tagged union of the three task input shapes.

    task "graph" carries a list of PropagationTree, "node" a single
    SocialNetwork, "link" a CascadeCorpus.
    """

    task: str
    trees: tuple = ()
    network: SocialNetwork | None = None
    corpus: CascadeCorpus | None = None

    def __post_init__(self):
        if self.task == "graph":
            if not self.trees:
                raise DataError("graph dataset without trees")
            object.__setattr__(self, "trees", tuple(self.trees))
        elif self.task == "node":
            if self.network is None:
                raise DataError("node dataset without a network")
        elif self.task == "link":
            if self.corpus is None:
                raise DataError("link dataset without a cascade corpus")
        else:
            raise DataError(f"unknown task {self.task!r}")

    def n_items(self) -> int:
        """Number of splittable units: trees, labeled nodes, or cascades."""
        if self.task == "graph":
            return len(self.trees)
        if self.task == "node":
            return len(self.network.labels)
        return len(self.corpus.cascades)


@dataclass(frozen=True)
class InfoPropView:
    """Task-agnostic propagation view: symmetric adjacency, an ego node,
    and BFS hop distances that act as discrete activation times."""

    node_ids: tuple
    ego: object
    adjacency: np.ndarray  # (n, n) symmetric 0/1, zero diagonal
    hop: np.ndarray  # int64, UNREACHABLE sentinel
    horizon: int  # max finite hop (0 for an isolated ego)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def ego_index(self) -> int:
        return self.node_ids.index(self.ego)

    def reachable(self) -> np.ndarray:
        return self.hop < UNREACHABLE


def _symmetric_adjacency(n: int, index: dict, edge_pairs) -> np.ndarray:
    adj = np.zeros((n, n), dtype=np.float64)
    for u, v in edge_pairs:
        i, j = index[u], index[v]
        if i == j:
            continue  # self-loops are stripped on ingestion
        adj[i, j] = 1.0
        adj[j, i] = 1.0
    return adj


def _bfs_hops(adjacency: np.ndarray, start: int) -> np.ndarray:
    n = adjacency.shape[0]
    hop = np.full(n, UNREACHABLE, dtype=np.int64)
    hop[start] = 0
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in np.flatnonzero(adjacency[u]):
            if hop[v] == UNREACHABLE:
                hop[v] = hop[u] + 1
                queue.append(int(v))
    return hop


def build_view(source, ego=None, *, network: SocialNetwork | None = None) -> InfoPropView:
    """Build the propagation view of a tree, a network, or a cascade.

    Edge direction and relation types are collapsed into one undirected
    adjacency; hops come from BFS at the ego. Defaults: a tree's ego is
    its root, a cascade's ego is its first user.
    """
    if isinstance(source, PropagationTree):
        ids = source.node_ids
        pairs = source.edges
        if ego is None:
            ego = source.root
    elif isinstance(source, SocialNetwork):
        ids = source.node_ids
        pairs = [pair for edges in source.relations for pair in edges]
        if ego is None:
            raise DataError("an ego node is required for a social network view")
    elif isinstance(source, Cascade):
        if network is None:
            raise DataError("a cascade view needs the surrounding network")
        ids = network.node_ids
        pairs = [pair for edges in network.relations for pair in edges]
        if ego is None:
            ego = source.users[0]
    else:
        raise DataError(f"cannot build a view from {type(source).__name__}")

    index = {node: i for i, node in enumerate(ids)}
    if ego not in index:
        raise DataError(f"unknown ego id {ego!r}")
    adjacency = _symmetric_adjacency(len(ids), index, pairs)
    hop = _bfs_hops(adjacency, index[ego])
    finite = hop[hop < UNREACHABLE]
    horizon = int(finite.max()) if finite.size else 0
    adjacency.setflags(write=False)
    hop.setflags(write=False)
    return InfoPropView(tuple(ids), ego, adjacency, hop, horizon)


def hop_distance(view: InfoPropView, node_id) -> int:
    """Precomputed BFS distance from the ego (UNREACHABLE if disconnected)."""
    try:
        idx = view.node_ids.index(node_id)
    except ValueError:
        raise DataError(f"unknown node id {node_id!r}") from None
    return int(view.hop[idx])


def relation_matrices(network: SocialNetwork) -> list:
    """One symmetric 0/1 adjacency per relation type, in relation order."""
    index = {node: i for i, node in enumerate(network.node_ids)}
    return [_symmetric_adjacency(network.n_nodes, index, pairs)
            for pairs in network.relations]


def tree_matrix(tree: PropagationTree) -> np.ndarray:
    """Symmetric adjacency of a propagation tree's edges."""
    index = {node: i for i, node in enumerate(tree.node_ids)}
    return _symmetric_adjacency(tree.n_nodes, index, tree.edges)


def ego_subgraph(network: SocialNetwork, ego, k: int) -> SocialNetwork:
    """Induced subgraph on nodes within k hops of `ego` (collapsed edges
    define the hops; relation tags are kept on the induced edges)."""
    if k < 0:
        raise DataError("k must be non-negative")
    view = build_view(network, ego=ego)
    keep = np.flatnonzero(view.hop <= k)
    keep_ids = [network.node_ids[i] for i in keep]
    keep_set = set(keep_ids)
    relations = tuple(
        tuple((u, v) for u, v in edges if u in keep_set and v in keep_set)
        for edges in network.relations
    )
    labels = {n: y for n, y in network.labels.items() if n in keep_set}
    return SocialNetwork(tuple(keep_ids), relations, network.features[keep], labels)
