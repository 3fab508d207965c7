"""The assembled dual-stream model and per-task instance preparation.

One instance is the unit of both training and prediction: a whole tree
(graph task), one labeled node with its k-hop neighbourhood (node task),
or one cascade over the shared user network (link task). Instances are
precomputed from a dataset so the per-step work is pure tensor math.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .encoders import (
    ContextEncoder,
    EncoderConfig,
    FeatureProjection,
    GraphEncoder,
    Module,
    UserEmbeddingProjection,
)
from .errors import ConfigError, DataError
from .graphs import (
    TaskDataset,
    build_view,
    ego_subgraph,
    relation_matrices,
)
from .heads import FusionConfig, GraphHead, LinkHead, NodeHead, enhance, fuse, supervised_loss, total_loss
from .kinetics import VARIANTS
from .propagation import (
    BetaHead,
    PropagationEncoder,
    StateHead,
    kinetic_loss,
    run_pathway,
)
from .tensor import Tensor, constant, gather_rows

TASKS = ("graph", "node", "link")

ABLATIONS = ("none", "no-pretrain", "no-prop-embedding", "regular-kinetic", "literal-ode")


@dataclass(frozen=True)
class ModelConfig:
    """Static architecture description (data sizes plus encoder knobs)."""

    task: str = "graph"
    d_in: int = 4
    n_classes: int = 2
    n_items: int = 2
    n_relations: int = 1
    n_users: int = 0
    ego_k: int = 2
    t_max: int = 6
    variant: str = "neighbor"
    detach_propagation: bool = False
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.task in ("graph", "node") and self.d_in < 1:
            raise ConfigError("d_in must be positive")
        if self.task == "link" and self.n_users < 1:
            raise ConfigError("the link task needs the user count up front")
        if self.n_classes < 2 and self.task != "link":
            raise ConfigError("need at least two classes")
        if self.n_items < 1 or self.n_relations < 1:
            raise ConfigError("n_items and n_relations must be positive")
        if self.ego_k < 0 or self.t_max < 0:
            raise ConfigError("ego_k and t_max must be non-negative")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown kinetic variant {self.variant!r}")


def apply_ablation(cfg: ModelConfig, ablation: str) -> ModelConfig:
    """Translate an ablation switch into model settings. "no-pretrain"
    is a training-time choice and leaves the model untouched."""
    if ablation not in ABLATIONS:
        raise ConfigError(f"unknown ablation {ablation!r}; choose from {ABLATIONS}")
    if ablation == "no-prop-embedding":
        return ModelConfig(**{**_config_dict(cfg), "detach_propagation": True})
    if ablation == "regular-kinetic":
        return ModelConfig(**{**_config_dict(cfg), "variant": "regular"})
    if ablation == "literal-ode":
        return ModelConfig(**{**_config_dict(cfg), "variant": "literal"})
    return cfg


def _config_dict(cfg: ModelConfig) -> dict:
    d = {f: getattr(cfg, f) for f in cfg.__dataclass_fields__}
    return d


@dataclass
class Instance:
    """Everything one forward pass needs, precomputed."""

    features: np.ndarray | None  # None for the link task (learned table)
    rel_adjacencies: list
    union_adjacency: np.ndarray
    hop: np.ndarray
    reachable: np.ndarray
    target: int
    ego_row: int | None = None  # node task: row to classify
    exclude: np.ndarray | None = None  # link task: users already active
    key: object = None  # stable identifier for bookkeeping


def node_instance(network, node_id, ego_k: int, target: int = -1) -> Instance:
    """Classification instance for one node: its k-hop neighbourhood with
    the node itself as the ego."""
    sub = ego_subgraph(network, node_id, ego_k)
    view = build_view(sub, ego=node_id)
    return Instance(
        features=sub.features,
        rel_adjacencies=relation_matrices(sub),
        union_adjacency=view.adjacency,
        hop=view.hop,
        reachable=view.reachable(),
        target=int(target),
        ego_row=view.ego_index,
        key=node_id,
    )


def link_instance(network, cascade, rels=None, *, exclude_all=False,
                  key=None) -> Instance:
    """Next-user instance for one cascade over `network`.

    Training form (default): the last event is the target and the earlier
    users are masked out. Inference form (exclude_all=True): the whole
    cascade is the observed prefix, every listed user is masked, and the
    target is a placeholder -1.
    """
    if rels is None:
        rels = relation_matrices(network)
    view = build_view(cascade, network=network)
    index = {node: i for i, node in enumerate(network.node_ids)}
    observed = cascade.users if exclude_all else cascade.users[:-1]
    exclude = np.zeros(network.n_nodes, dtype=bool)
    for user in observed:
        exclude[index[user]] = True
    target = -1 if exclude_all else index[cascade.users[-1]]
    return Instance(
        features=None,
        rel_adjacencies=rels,
        union_adjacency=view.adjacency,
        hop=view.hop,
        reachable=view.reachable(),
        target=target,
        exclude=exclude,
        key=key,
    )


def prepare_instances(dataset: TaskDataset, ego_k: int = 2) -> list:
    """Turn a dataset into per-item Instance records (deterministic order)."""
    if dataset.task == "graph":
        out = []
        for tree in dataset.trees:
            view = build_view(tree)
            out.append(Instance(
                features=tree.features,
                rel_adjacencies=[view.adjacency],
                union_adjacency=view.adjacency,
                hop=view.hop,
                reachable=view.reachable(),
                target=int(tree.label),
                key=tree.tree_id,
            ))
        return out

    if dataset.task == "node":
        network = dataset.network
        return [node_instance(network, node_id, ego_k, target=label)
                for node_id, label in network.labels.items()]

    corpus = dataset.corpus
    rels = relation_matrices(corpus.network)
    return [link_instance(corpus.network, cascade, rels=rels, key=c)
            for c, cascade in enumerate(corpus.cascades)]


class PropagationModel(Module):
    """Dual-stream network with a kinetics-supervised propagation pathway.

    The trunk (context encoder, structure encoder, propagation encoder,
    state and rate heads) is task-agnostic; the projection and the output
    head are task-specific and are the parts replaced when fine-tuning.
    """

    def __init__(self, config: ModelConfig, rng, user_adjacency=None):
        self.config = config
        d = config.encoder.d_model
        if config.task == "link":
            if user_adjacency is None:
                raise ConfigError("the link task needs the user adjacency "
                                  "to smooth the embedding table")
            self.project = UserEmbeddingProjection(config.n_users, d,
                                                   user_adjacency, rng)
        else:
            self.project = FeatureProjection(config.d_in, d, rng)
        self.context = ContextEncoder(config.encoder, rng)
        self.graph_enc = GraphEncoder(config.encoder, config.n_relations, rng)
        self.prop = PropagationEncoder(config.encoder, rng, t_max=config.t_max)
        self.state_head = StateHead(d, config.n_items, rng)
        self.beta_head = BetaHead(d, config.n_items, rng)
        if config.task == "graph":
            self.head = GraphHead(d, config.n_classes, rng)
        elif config.task == "node":
            self.head = NodeHead(d, config.n_classes, rng)
        else:
            self.head = LinkHead(d, rng)

    # -- parameter bookkeeping -------------------------------------------

    def trunk_modules(self) -> list:
        return [self.context, self.graph_enc, self.prop,
                self.state_head, self.beta_head]

    def trunk_parameters(self) -> list:
        out = []
        for m in self.trunk_modules():
            out.extend(m.parameters())
        return out

    def named_parameters(self) -> dict:
        params = {}
        for p in self.parameters():
            if not p.name:
                raise ConfigError("all model parameters must carry names")
            if p.name in params:
                raise ConfigError(f"duplicate parameter name {p.name!r}")
            params[p.name] = p
        return params

    # -- forward passes ----------------------------------------------------

    def forward(self, inst: Instance, fusion: FusionConfig) -> tuple:
        """Return (probs, kinetics-loss, extras) for one instance."""
        cfg = self.config
        if inst.features is None:
            x = self.project()
        else:
            x = self.project(inst.features)
        h = self.context(x)
        adjs, inv = GraphEncoder.prepare(inst.rel_adjacencies)
        e = self.graph_enc(x, adjs, inv)
        extras = {}
        if cfg.detach_propagation:
            h_hat = h
            lp = constant(np.array(0.0))
        else:
            zs, states, beta_hat = run_pathway(h, inst.hop, self.prop,
                                               self.state_head, self.beta_head)
            h_hat = enhance(h, zs[-1])
            lp = kinetic_loss(states, inst.union_adjacency, beta_hat,
                              variant=cfg.variant, reachable=inst.reachable)
            extras["states"] = states
            extras["beta_hat"] = beta_hat
        o = fuse(e, h_hat, fusion.gamma)
        if cfg.task == "graph":
            probs = self.head(o)
        elif cfg.task == "node":
            if inst.ego_row is None:
                raise DataError("node instances must carry the ego row")
            probs = self.head(gather_rows(o, np.array([inst.ego_row])))
        else:
            if inst.exclude is None:
                raise DataError("link instances must carry the exclusion mask")
            probs = self.head(o, inst.exclude)
        return probs, lp, extras

    def loss(self, inst: Instance, fusion: FusionConfig) -> tuple:
        """Total objective and its parts for one instance."""
        probs, lp, _ = self.forward(inst, fusion)
        ls = supervised_loss(probs, np.array([inst.target]))
        total = total_loss(ls, lp, fusion.lam)
        parts = {"task": float(ls.data), "kinetic": float(lp.data),
                 "total": float(total.data)}
        return total, parts

    def predict_probs(self, inst: Instance, fusion: FusionConfig) -> np.ndarray:
        """Class (or next-user) probabilities as a flat numpy vector."""
        probs, _, _ = self.forward(inst, fusion)
        return probs.data.reshape(-1).copy()
