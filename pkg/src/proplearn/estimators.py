"""Scikit-learn style estimators wrapping the training harness.

Hyperparameters are stored verbatim in __init__ (so get_params/set_params
and clone work) and validated at fit time. Fitted state lives in
underscore-suffixed attributes; calling predict before fit raises
sklearn's NotFittedError.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .encoders import EncoderConfig
from .errors import DataError
from .graphs import TaskDataset
from .metrics import accuracy, balanced_accuracy, evaluate_ranking
from .model import link_instance, node_instance, prepare_instances
from .training import RunConfig, run_training
from .validation import (
    ensure_cascades_over,
    ensure_corpus,
    ensure_network,
    ensure_probability_rows,
    ensure_same_users,
    ensure_tree_sequence,
    label_dict,
)


class PropagationEstimator(BaseEstimator):
    """Shared hyperparameter surface and fit plumbing for all three tasks."""

    _task = ""  # set by subclasses

    def __init__(self, d_model=32, n_heads=4, context_depth=2, graph_depth=2,
                 prop_depth=2, activation="relu", epochs=50, lr=1e-3,
                 patience=20, gamma=0.5, lam=0.5, ablation="none", ego_k=2,
                 t_max=6, few_shot=0.0, seed=0):
        self.d_model = d_model
        self.n_heads = n_heads
        self.context_depth = context_depth
        self.graph_depth = graph_depth
        self.prop_depth = prop_depth
        self.activation = activation
        self.epochs = epochs
        self.lr = lr
        self.patience = patience
        self.gamma = gamma
        self.lam = lam
        self.ablation = ablation
        self.ego_k = ego_k
        self.t_max = t_max
        self.few_shot = few_shot
        self.seed = seed

    def _run_config(self) -> RunConfig:
        encoder = EncoderConfig(
            d_model=self.d_model, n_heads=self.n_heads,
            context_depth=self.context_depth, graph_depth=self.graph_depth,
            prop_depth=self.prop_depth, activation=self.activation)
        return RunConfig(
            task=self._task, seed=self.seed, epochs=self.epochs, lr=self.lr,
            patience=self.patience, gamma=self.gamma, lam=self.lam,
            ablation=self.ablation, ego_k=self.ego_k, t_max=self.t_max,
            few_shot=self.few_shot, encoder=encoder)

    def _fit_dataset(self, dataset: TaskDataset, pretrain_payload=None):
        cfg = self._run_config()
        model, result = run_training(cfg, dataset,
                                     pretrain_payload=pretrain_payload)
        self.run_config_ = cfg
        self.model_ = model
        self.result_ = result
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise NotFittedError(
                f"{type(self).__name__} must be fitted before prediction")


class PropagationTreeClassifier(PropagationEstimator):
    """Whole-tree classifier: one label per propagation tree."""

    _task = "graph"

    def fit(self, trees, y=None, pretrain_payload=None):
        trees = ensure_tree_sequence(trees)
        if y is not None:
            y = np.asarray(y)
            if y.shape != (len(trees),):
                raise DataError(
                    f"y has shape {y.shape}, expected ({len(trees)},)")
            trees = tuple(replace(t, label=int(v)) for t, v in zip(trees, y))
        self._fit_dataset(TaskDataset(task="graph", trees=trees),
                          pretrain_payload)
        self.classes_ = np.arange(self.model_.config.n_classes)
        self.n_features_in_ = self.model_.config.d_in
        return self

    def predict_proba(self, trees) -> np.ndarray:
        self._check_fitted()
        trees = ensure_tree_sequence(trees)
        if trees[0].features.shape[1] != self.n_features_in_:
            raise DataError(
                f"trees have {trees[0].features.shape[1]} features, "
                f"the model was fitted with {self.n_features_in_}")
        instances = prepare_instances(TaskDataset(task="graph", trees=trees),
                                      ego_k=self.ego_k)
        probs = np.stack([self.model_.predict_probs(inst, self.run_config_.fusion)
                          for inst in instances])
        return ensure_probability_rows(probs)

    def predict(self, trees) -> np.ndarray:
        probs = self.predict_proba(trees)
        return self.classes_[np.argmax(probs, axis=1)]

    def score(self, trees, y=None) -> float:
        trees = ensure_tree_sequence(trees)
        truth = np.array([t.label for t in trees]) if y is None else np.asarray(y)
        return accuracy(truth, self.predict(trees))


class SocialNodeClassifier(PropagationEstimator):
    """Per-node classifier over a social network; each node is judged from
    its own k-hop neighbourhood."""

    _task = "node"

    def fit(self, network, y=None, pretrain_payload=None):
        network = ensure_network(network)
        labels = label_dict(network, y)
        network = replace(network, labels=labels)
        self._fit_dataset(TaskDataset(task="node", network=network),
                          pretrain_payload)
        self.classes_ = np.arange(self.model_.config.n_classes)
        self.n_features_in_ = self.model_.config.d_in
        return self

    def predict_proba(self, network, nodes=None) -> np.ndarray:
        self._check_fitted()
        network = ensure_network(network)
        if network.features.shape[1] != self.n_features_in_:
            raise DataError(
                f"network has {network.features.shape[1]} features, "
                f"the model was fitted with {self.n_features_in_}")
        if nodes is None:
            nodes = list(network.labels)
        nodes = list(nodes)
        if not nodes:
            raise DataError("no nodes to classify: the network has no "
                            "labels and no explicit node list was given")
        probs = np.stack([
            self.model_.predict_probs(node_instance(network, node, self.ego_k),
                                      self.run_config_.fusion)
            for node in nodes])
        return ensure_probability_rows(probs)

    def predict(self, network, nodes=None) -> np.ndarray:
        probs = self.predict_proba(network, nodes)
        return self.classes_[np.argmax(probs, axis=1)]

    def score(self, network, y=None) -> float:
        network = ensure_network(network)
        labels = label_dict(network, y)
        nodes = list(labels)
        truth = np.array([labels[n] for n in nodes])
        return balanced_accuracy(truth, self.predict(network, nodes))


class CascadeLinkPredictor(PropagationEstimator):
    """Ranks who joins a cascade next. The user set is fixed at fit time;
    prediction-time cascades must live on the same network."""

    _task = "link"

    def fit(self, corpus, pretrain_payload=None):
        corpus = ensure_corpus(corpus)
        self._fit_dataset(TaskDataset(task="link", corpus=corpus),
                          pretrain_payload)
        self.network_ = corpus.network
        self.user_ids_ = tuple(corpus.network.node_ids)
        return self

    def predict_proba(self, cascades) -> np.ndarray:
        """Row per cascade: the next-user distribution over every user not
        already in that cascade (observed users get probability zero)."""
        self._check_fitted()
        corpus = self._as_corpus(cascades)
        rows = [self.model_.predict_probs(
                    link_instance(corpus.network, cascade, exclude_all=True),
                    self.run_config_.fusion)
                for cascade in corpus.cascades]
        return ensure_probability_rows(np.stack(rows))

    def predict(self, cascades) -> np.ndarray:
        """Most likely next user id for each cascade."""
        probs = self.predict_proba(cascades)
        ids = np.asarray(self.user_ids_, dtype=object)
        return ids[np.argmax(probs, axis=1)]

    def score(self, corpus) -> float:
        """Mean average precision at 100 for predicting each cascade's last
        user from its earlier events."""
        self._check_fitted()
        corpus = self._as_corpus(corpus)
        instances = prepare_instances(TaskDataset(task="link", corpus=corpus),
                                      ego_k=self.ego_k)
        queries = [(self.model_.predict_probs(inst, self.run_config_.fusion),
                    inst.target) for inst in instances]
        return evaluate_ranking(queries)["map@100"]

    def _as_corpus(self, cascades):
        if hasattr(cascades, "network"):
            corpus = ensure_corpus(cascades)
            ensure_same_users(self.user_ids_, corpus.network)
            return corpus
        return ensure_cascades_over(self.network_, cascades)
