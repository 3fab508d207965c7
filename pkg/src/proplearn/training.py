"""Training harness: splits, the optimizer, the epoch loop with early
stopping and best-weight tracking, warm starts, and grid sweeps.

Determinism contract: a fixed seed fixes the model init, the split, the
per-epoch visit order, and therefore the entire numeric history. Runs
abort with NumericError the moment the objective stops being finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .checkpoint import (
    load_parameters,
    restore_snapshot,
    snapshot_parameters,
)
from .encoders import EncoderConfig
from .errors import ConfigError, DataError, NumericError
from .graphs import TaskDataset
from .heads import FusionConfig
from .metrics import PRIMARY_METRIC, evaluate_classification, evaluate_ranking
from .model import (
    ABLATIONS,
    ModelConfig,
    PropagationModel,
    apply_ablation,
    prepare_instances,
)

SPLIT_RATIOS = {"graph": (0.6, 0.2, 0.2), "node": (0.7, 0.1, 0.2),
                "link": (0.8, 0.1, 0.1)}


@dataclass(frozen=True)
class RunConfig:
    """Everything one training run depends on besides the data."""

    task: str
    seed: int = 0
    epochs: int = 50
    lr: float = 1e-3
    patience: int = 20
    gamma: float = 0.5
    lam: float = 0.5
    ablation: str = "none"
    ego_k: int = 2
    t_max: int = 6
    few_shot: float = 0.0
    zero_shot: bool = False
    encoder: EncoderConfig = field(default_factory=EncoderConfig)

    def __post_init__(self):
        if self.task not in SPLIT_RATIOS:
            raise ConfigError(f"unknown task {self.task!r}")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if self.patience < 1:
            raise ConfigError("patience must be at least 1")
        if not 0.0 <= self.few_shot <= 1.0:
            raise ConfigError("few_shot must be a fraction in [0, 1]")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}")
        FusionConfig(gamma=self.gamma, lam=self.lam)  # range checks

    @property
    def fusion(self) -> FusionConfig:
        return FusionConfig(gamma=self.gamma, lam=self.lam)


def split_indices(n_items: int, task: str, seed: int) -> tuple:
    """Seeded shuffle, then contiguous train/val/test cuts with floored
    sizes (every split keeps at least one item)."""
    if task not in SPLIT_RATIOS:
        raise ConfigError(f"unknown task {task!r}")
    if n_items < 3:
        raise DataError("need at least three items to split")
    r_train, r_val, _ = SPLIT_RATIOS[task]
    perm = np.random.default_rng(seed).permutation(n_items)
    n_train = max(1, math.floor(r_train * n_items))
    n_val = max(1, math.floor(r_val * n_items))
    if n_train + n_val >= n_items:  # guarantee a non-empty test split
        n_train = n_items - n_val - 1
    return (perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])


class Adam:
    """Standard Adam with bias correction."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ConfigError("learning rate must be positive")
        self.params = list(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        correct1 = 1.0 - self.beta1 ** self.t
        correct2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / correct1) / (np.sqrt(v / correct2) + self.eps)


# ---------------------------------------------------------------------------
# Model construction from data.

def _union_adjacency(matrices) -> np.ndarray:
    union = np.zeros_like(matrices[0])
    for m in matrices:
        union = np.maximum(union, m)
    return union


def derive_model_config(cfg: RunConfig, dataset: TaskDataset) -> tuple:
    """Infer the architecture sizes a dataset implies. Returns
    (ModelConfig with the ablation applied, user adjacency or None)."""
    from .graphs import relation_matrices

    user_adjacency = None
    if dataset.task == "graph":
        d_in = dataset.trees[0].features.shape[1]
        n_classes = max(2, max(t.label for t in dataset.trees) + 1)
        base = ModelConfig(task="graph", d_in=d_in, n_classes=n_classes,
                           n_relations=1, ego_k=cfg.ego_k, t_max=cfg.t_max,
                           encoder=cfg.encoder)
    elif dataset.task == "node":
        network = dataset.network
        d_in = network.features.shape[1]
        n_classes = max(2, max(network.labels.values()) + 1)
        base = ModelConfig(task="node", d_in=d_in, n_classes=n_classes,
                           n_relations=network.n_relations, ego_k=cfg.ego_k,
                           t_max=cfg.t_max, encoder=cfg.encoder)
    else:
        network = dataset.corpus.network
        user_adjacency = _union_adjacency(relation_matrices(network))
        base = ModelConfig(task="link", n_users=network.n_nodes,
                           n_relations=network.n_relations, ego_k=cfg.ego_k,
                           t_max=cfg.t_max, encoder=cfg.encoder)
    return apply_ablation(base, cfg.ablation), user_adjacency


def build_model(cfg: RunConfig, dataset: TaskDataset) -> PropagationModel:
    if dataset.task != cfg.task:
        raise ConfigError(f"dataset is for task {dataset.task!r}, run wants {cfg.task!r}")
    model_cfg, user_adjacency = derive_model_config(cfg, dataset)
    return PropagationModel(model_cfg, np.random.default_rng(cfg.seed),
                            user_adjacency=user_adjacency)


# ---------------------------------------------------------------------------
# Evaluation.

def evaluate_split(model: PropagationModel, instances, indices,
                   fusion: FusionConfig) -> dict:
    """Metric dict for the instances selected by `indices`."""
    indices = list(indices)
    if not indices:
        raise DataError("cannot evaluate an empty split")
    task = model.config.task
    if task == "link":
        queries = [(model.predict_probs(instances[i], fusion), instances[i].target)
                   for i in indices]
        return evaluate_ranking(queries)
    y_true, y_pred, scores = [], [], []
    for i in indices:
        probs = model.predict_probs(instances[i], fusion)
        y_true.append(instances[i].target)
        y_pred.append(int(np.argmax(probs)))
        scores.append(float(probs[1]) if probs.shape[0] == 2 else float("nan"))
    pos_scores = scores if model.config.n_classes == 2 else None
    return evaluate_classification(np.array(y_true), np.array(y_pred), pos_scores)


# ---------------------------------------------------------------------------
# The training loop.

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_metrics: dict


@dataclass
class TrainResult:
    history: list
    best_epoch: int
    best_val: float
    metrics: dict  # {"train": ..., "val": ..., "test": ...}
    splits: dict  # {"train": [...], "val": [...], "test": [...]}
    stopped_early: bool


def _emit(log, line: str) -> None:
    if log is not None:
        log(line)


def few_shot_subset(train_idx: np.ndarray, fraction: float) -> np.ndarray:
    """Prefix of the already-shuffled train order: ceil(fraction * size)
    items. Prefixes nest, so a 1% budget is a subset of the 5% one."""
    if fraction <= 0.0:
        return train_idx
    n = max(1, math.ceil(fraction * len(train_idx)))
    return train_idx[:n]


def train_model(model: PropagationModel, instances, cfg: RunConfig,
                log=None) -> TrainResult:
    """Run the epoch loop and leave `model` holding the best-val weights."""
    fusion = cfg.fusion
    task = model.config.task
    primary = PRIMARY_METRIC[task]
    train_idx, val_idx, test_idx = split_indices(len(instances), task, cfg.seed)
    train_idx = few_shot_subset(train_idx, cfg.few_shot)
    splits = {"train": [int(i) for i in train_idx],
              "val": [int(i) for i in val_idx],
              "test": [int(i) for i in test_idx]}

    history: list = []
    best_val = -np.inf
    best_epoch = 0
    best_state = snapshot_parameters(model)
    stopped_early = False

    if cfg.epochs > 0 and not cfg.zero_shot:
        optimizer = Adam(model.parameters(), lr=cfg.lr)
        shuffle_rng = np.random.default_rng(cfg.seed + 7919)
        since_best = 0
        for epoch in range(1, cfg.epochs + 1):
            order = shuffle_rng.permutation(len(train_idx))
            losses = []
            for j in order:
                inst = instances[int(train_idx[j])]
                optimizer.zero_grad()
                total, _ = model.loss(inst, fusion)
                value = float(total.data)
                if not np.isfinite(value):
                    raise NumericError(
                        f"objective diverged at epoch {epoch} (loss {value})")
                total.backward()
                optimizer.step()
                losses.append(value)
            train_loss = float(np.mean(losses)) if losses else 0.0
            val_metrics = evaluate_split(model, instances, val_idx, fusion)
            history.append(EpochRecord(epoch, train_loss, val_metrics))
            _emit(log, f"{epoch},train,loss,{train_loss:.6f}")
            for name, value in sorted(val_metrics.items()):
                _emit(log, f"{epoch},val,{name},{value:.6f}")
            score = val_metrics[primary]
            improved = score > best_val
            if score >= best_val:
                # ties keep the later weights: same val score, more training
                best_val = score
                best_epoch = epoch
                best_state = snapshot_parameters(model)
            if improved:
                since_best = 0
            else:
                since_best += 1
                if since_best >= cfg.patience:
                    stopped_early = True
                    _emit(log, f"{epoch},val,early_stop,{best_epoch}")
                    break
        restore_snapshot(model, best_state)

    metrics = {
        "train": evaluate_split(model, instances, train_idx, fusion),
        "val": evaluate_split(model, instances, val_idx, fusion),
        "test": evaluate_split(model, instances, test_idx, fusion),
    }
    if best_val == -np.inf:
        best_val = metrics["val"][primary]
    for split in ("train", "val", "test"):
        for name, value in sorted(metrics[split].items()):
            _emit(log, f"final,{split},{name},{value:.6f}")
    return TrainResult(history=history, best_epoch=best_epoch, best_val=best_val,
                       metrics=metrics, splits=splits, stopped_early=stopped_early)


def run_training(cfg: RunConfig, dataset: TaskDataset, log=None,
                 pretrain_payload: dict | None = None) -> tuple:
    """Build, optionally warm-start, and train a model on a dataset.

    Warm-start scope: zero-shot runs restore every weight, otherwise only
    the task-agnostic trunk is copied and the projection and head stay
    fresh. The "no-pretrain" ablation skips the warm start entirely.
    """
    model = build_model(cfg, dataset)
    instances = prepare_instances(dataset, ego_k=cfg.ego_k)
    if pretrain_payload is not None and cfg.ablation != "no-pretrain":
        scope = "full" if cfg.zero_shot else "trunk"
        load_parameters(model, pretrain_payload, scope=scope)
    result = train_model(model, instances, cfg, log=log)
    return model, result


# ---------------------------------------------------------------------------
# Grid sweeps.

def sweep(cfg: RunConfig, dataset: TaskDataset, gammas, lams, seeds=None,
          log=None) -> list:
    """One fresh run per (gamma, lambda, seed) triple; rows carry the val
    and test primary metric."""
    gammas = list(gammas)
    lams = list(lams)
    seeds = [cfg.seed] if seeds is None else [int(s) for s in seeds]
    if not gammas or not lams or not seeds:
        raise ConfigError("sweep grids must be non-empty")
    primary = PRIMARY_METRIC[cfg.task]
    rows = []
    for gamma in gammas:
        for lam in lams:
            for seed in seeds:
                run_cfg = replace(cfg, gamma=float(gamma), lam=float(lam),
                                  seed=seed)
                _, result = run_training(run_cfg, dataset, log=None)
                row = {"gamma": float(gamma), "lambda": float(lam),
                       "seed": seed,
                       f"val_{primary}": result.metrics["val"][primary],
                       f"test_{primary}": result.metrics["test"][primary]}
                rows.append(row)
                _emit(log, "sweep,{gamma}/{lam}/{seed},{name},{val:.6f}".format(
                    gamma=gamma, lam=lam, seed=seed, name=f"test_{primary}",
                    val=row[f"test_{primary}"]))
    return rows


def aggregate_sweep(rows: list, task: str) -> list:
    """Mean and population std of the primary metrics per grid point,
    pooled over the repeat seeds (grid order preserved)."""
    primary = PRIMARY_METRIC[task]
    grouped: dict = {}
    for row in rows:
        grouped.setdefault((row["gamma"], row["lambda"]), []).append(row)
    out = []
    for (gamma, lam), members in grouped.items():
        summary = {"gamma": gamma, "lambda": lam, "n_seeds": len(members)}
        for col in (f"val_{primary}", f"test_{primary}"):
            values = np.array([m[col] for m in members])
            summary[f"mean_{col}"] = float(values.mean())
            summary[f"std_{col}"] = float(values.std())
        out.append(summary)
    return out


def _write_csv(path: str, header: list, rows: list) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(
                repr(float(row[h])) if isinstance(row[h], float) else str(row[h])
                for h in header) + "\n")


def write_sweep_csv(path: str, rows: list, task: str) -> None:
    primary = PRIMARY_METRIC[task]
    _write_csv(path, ["gamma", "lambda", "seed",
                      f"val_{primary}", f"test_{primary}"], rows)


def write_sweep_summary_csv(path: str, rows: list, task: str) -> None:
    primary = PRIMARY_METRIC[task]
    summary = aggregate_sweep(rows, task)
    _write_csv(path, ["gamma", "lambda", "n_seeds",
                      f"mean_val_{primary}", f"std_val_{primary}",
                      f"mean_test_{primary}", f"std_test_{primary}"], summary)
