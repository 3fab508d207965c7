"""Readers and writers for the three dataset layouts.

Graph task:  one JSON object per line, each a full propagation tree.
Node task:   nodes.tsv (id, label or "-", tab, feature columns) plus
             edges.tsv (src, dst, relation tag).
Link task:   cascades.txt (one cascade per line, "user,timestamp" tokens
             separated by spaces) plus the same edges.tsv layout.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import DataError
from .graphs import Cascade, CascadeCorpus, PropagationTree, SocialNetwork, TaskDataset


def _require(path: str) -> None:
    if not os.path.exists(path):
        raise DataError(f"missing input file: {path}")


# ---------------------------------------------------------------------------
# Graph task: propagation trees as JSON lines.

def load_trees(path: str) -> list:
    _require(path)
    trees = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            try:
                nodes = obj["nodes"]
                ids = [node["id"] for node in nodes]
                feats = np.array([node["feat"] for node in nodes], dtype=np.float64)
                tree = PropagationTree(
                    node_ids=tuple(ids),
                    root=obj["root"],
                    edges=tuple((u, v) for u, v in obj["edges"]),
                    features=feats,
                    label=int(obj["label"]),
                    tree_id=str(obj.get("id", lineno)),
                )
            except KeyError as exc:
                raise DataError(f"{path}:{lineno}: missing field {exc}") from None
            trees.append(tree)
    if not trees:
        raise DataError(f"{path}: no trees found")
    return trees


def save_trees(trees, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for tree in trees:
            obj = {
                "id": tree.tree_id,
                "label": tree.label,
                "root": tree.root,
                "nodes": [
                    {"id": node, "feat": tree.features[i].tolist()}
                    for i, node in enumerate(tree.node_ids)
                ],
                "edges": [[u, v] for u, v in tree.edges],
            }
            fh.write(json.dumps(obj) + "\n")


# ---------------------------------------------------------------------------
# Shared TSV pieces.

def _load_edges(path: str):
    """edges.tsv rows are (src, dst, relation-tag). Returns the per-tag
    edge lists with tags in first-appearance order."""
    _require(path)
    order: list = []
    by_tag: dict = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields")
            src, dst, tag = parts
            if tag not in by_tag:
                order.append(tag)
                by_tag[tag] = []
            by_tag[tag].append((src, dst))
    if not order:
        raise DataError(f"{path}: no edges found")
    return order, by_tag


def _load_nodes(path: str):
    _require(path)
    ids, labels, rows = [], {}, []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) < 3:
                raise DataError(f"{path}:{lineno}: expected id, label, features")
            node, label = parts[0], parts[1]
            try:
                feat = [float(x) for x in parts[2:]]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric feature value") from None
            ids.append(node)
            if label != "-":
                labels[node] = int(label)
            rows.append(feat)
    widths = {len(row) for row in rows}
    if len(widths) != 1:
        raise DataError(f"{path}: inconsistent feature width {sorted(widths)}")
    return ids, labels, np.array(rows, dtype=np.float64)


def load_network(nodes_path: str, edges_path: str) -> SocialNetwork:
    ids, labels, feats = _load_nodes(nodes_path)
    order, by_tag = _load_edges(edges_path)
    relations = tuple(tuple(by_tag[tag]) for tag in order)
    return SocialNetwork(tuple(ids), relations, feats, labels)


def save_network(network: SocialNetwork, nodes_path: str, edges_path: str,
                 relation_tags=None) -> None:
    if relation_tags is None:
        relation_tags = [f"r{r}" for r in range(network.n_relations)]
    with open(nodes_path, "w", encoding="utf-8") as fh:
        for i, node in enumerate(network.node_ids):
            label = str(network.labels[node]) if node in network.labels else "-"
            feats = "\t".join(repr(float(x)) for x in network.features[i])
            fh.write(f"{node}\t{label}\t{feats}\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        for tag, edges in zip(relation_tags, network.relations):
            for u, v in edges:
                fh.write(f"{u}\t{v}\t{tag}\n")


# ---------------------------------------------------------------------------
# Link task: cascades over a network.

def load_cascades(cascades_path: str, edges_path: str,
                  feature_dim: int = 4) -> CascadeCorpus:
    """Cascade users may extend the node set implied by edges.tsv; any
    user seen only in cascades becomes an isolated node. Node features
    are zero placeholders, the link pathway learns embeddings instead."""
    _require(cascades_path)
    order, by_tag = _load_edges(edges_path)
    cascades = []
    with open(cascades_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            events = []
            for token in line.split():
                if "," not in token:
                    raise DataError(f"{cascades_path}:{lineno}: token {token!r} is not user,timestamp")
                user, stamp = token.split(",", 1)
                try:
                    events.append((user, float(stamp)))
                except ValueError:
                    raise DataError(f"{cascades_path}:{lineno}: bad timestamp {stamp!r}") from None
            if len(events) < 2:
                raise DataError(f"{cascades_path}:{lineno}: cascades need at least two events")
            cascades.append(Cascade(tuple(events)))
    if not cascades:
        raise DataError(f"{cascades_path}: no cascades found")
    ids: list = []
    seen = set()
    for tag in order:
        for u, v in by_tag[tag]:
            for node in (u, v):
                if node not in seen:
                    seen.add(node)
                    ids.append(node)
    for cascade in cascades:
        for user in cascade.users:
            if user not in seen:
                seen.add(user)
                ids.append(user)
    feats = np.zeros((len(ids), feature_dim), dtype=np.float64)
    network = SocialNetwork(tuple(ids), tuple(tuple(by_tag[t]) for t in order), feats)
    return CascadeCorpus(tuple(cascades), network)


def save_cascades(corpus: CascadeCorpus, cascades_path: str, edges_path: str) -> None:
    with open(cascades_path, "w", encoding="utf-8") as fh:
        for cascade in corpus.cascades:
            fh.write(" ".join(f"{u},{repr(t)}" for u, t in cascade.events) + "\n")
    with open(edges_path, "w", encoding="utf-8") as fh:
        for r, edges in enumerate(corpus.network.relations):
            for u, v in edges:
                fh.write(f"{u}\t{v}\tr{r}\n")


# ---------------------------------------------------------------------------
# Dispatch.

def load_task_dataset(task: str, data_dir: str) -> TaskDataset:
    """Load the files a task expects from `data_dir`.

    graph -> trees.jsonl; node -> nodes.tsv + edges.tsv;
    link -> cascades.txt + edges.tsv.
    """
    if task == "graph":
        return TaskDataset(task="graph", trees=tuple(load_trees(os.path.join(data_dir, "trees.jsonl"))))
    if task == "node":
        network = load_network(os.path.join(data_dir, "nodes.tsv"), os.path.join(data_dir, "edges.tsv"))
        if not network.labels:
            raise DataError("node task requires at least one labeled node")
        return TaskDataset(task="node", network=network)
    if task == "link":
        corpus = load_cascades(os.path.join(data_dir, "cascades.txt"), os.path.join(data_dir, "edges.tsv"))
        return TaskDataset(task="link", corpus=corpus)
    raise DataError(f"unknown task {task!r}")


def save_task_dataset(dataset: TaskDataset, data_dir: str) -> None:
    os.makedirs(data_dir, exist_ok=True)
    if dataset.task == "graph":
        save_trees(dataset.trees, os.path.join(data_dir, "trees.jsonl"))
    elif dataset.task == "node":
        save_network(dataset.network, os.path.join(data_dir, "nodes.tsv"),
                     os.path.join(data_dir, "edges.tsv"))
    else:
        save_cascades(dataset.corpus, os.path.join(data_dir, "cascades.txt"),
                      os.path.join(data_dir, "edges.tsv"))
