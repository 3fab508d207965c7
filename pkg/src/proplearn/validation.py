"""Input validation helpers shared by the estimator layer.

These raise DataError (invalid contents) or ConfigError (type mismatch)
so callers get the library's exit-code mapping instead of raw exceptions
from deep inside a forward pass.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, DataError
from .graphs import Cascade, CascadeCorpus, PropagationTree, SocialNetwork


def ensure_tree_sequence(trees) -> tuple:
    """A non-empty sequence of PropagationTree objects, as a tuple."""
    if isinstance(trees, PropagationTree):
        trees = (trees,)
    try:
        out = tuple(trees)
    except TypeError:
        raise ConfigError("expected a sequence of propagation trees") from None
    if not out:
        raise DataError("need at least one propagation tree")
    for item in out:
        if not isinstance(item, PropagationTree):
            raise ConfigError(
                f"expected PropagationTree items, got {type(item).__name__}")
    widths = {t.features.shape[1] for t in out}
    if len(widths) != 1:
        raise DataError(f"trees disagree on feature width: {sorted(widths)}")
    return out


def ensure_network(network) -> SocialNetwork:
    if not isinstance(network, SocialNetwork):
        raise ConfigError(
            f"expected a SocialNetwork, got {type(network).__name__}")
    return network


def ensure_corpus(corpus) -> CascadeCorpus:
    if isinstance(corpus, CascadeCorpus):
        return corpus
    raise ConfigError(
        f"expected a CascadeCorpus, got {type(corpus).__name__}")


def ensure_cascades_over(network: SocialNetwork, cascades) -> CascadeCorpus:
    """Wrap loose cascades into a corpus over `network` (validates user
    membership via the corpus constructor)."""
    if isinstance(cascades, CascadeCorpus):
        cascades = cascades.cascades
    if isinstance(cascades, Cascade):
        cascades = (cascades,)
    out = tuple(cascades)
    if not out:
        raise DataError("need at least one cascade")
    for item in out:
        if not isinstance(item, Cascade):
            raise ConfigError(
                f"expected Cascade items, got {type(item).__name__}")
    return CascadeCorpus(cascades=out, network=network)


def ensure_same_users(fitted_ids: tuple, network: SocialNetwork) -> None:
    """The link model's embedding table is positional, so prediction-time
    networks must present the identical user list in the identical order."""
    if tuple(network.node_ids) != tuple(fitted_ids):
        raise DataError("network users differ from the ones seen during fit")


def label_dict(network: SocialNetwork, y=None) -> dict:
    """Labels to train on: `y` (mapping node id -> int) when given,
    otherwise the labels carried by the network itself."""
    labels = dict(network.labels) if y is None else dict(y)
    if not labels:
        raise DataError("no labelled nodes to learn from")
    known = set(network.node_ids)
    for node, value in labels.items():
        if node not in known:
            raise DataError(f"labelled node {node!r} is not in the network")
        if int(value) != value or int(value) < 0:
            raise DataError(f"label for node {node!r} must be a non-negative "
                            f"integer, got {value!r}")
    return {node: int(value) for node, value in labels.items()}


def ensure_probability_rows(arr: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Each row is a probability vector: finite, non-negative, sums to one
    within `tol`."""
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"expected a 2-d probability matrix, got {arr.ndim}-d")
    if not np.all(np.isfinite(arr)):
        raise DataError("probabilities must be finite")
    if np.any(arr < -tol):
        raise DataError("probabilities must be non-negative")
    sums = arr.sum(axis=1)
    worst = float(np.max(np.abs(sums - 1.0))) if arr.shape[0] else 0.0
    if worst > tol:
        raise DataError(f"probability rows sum to 1 +/- {worst:.3e}, "
                        f"tolerance is {tol:.1e}")
    return arr
