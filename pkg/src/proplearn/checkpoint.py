"""Model checkpoints as versioned JSON.

Weights are stored as plain JSON numbers. Python serializes floats with
their shortest round-tripping decimal form, so a save/load cycle restores
bit-identical float64 values. Link-task checkpoints embed the smoothing
adjacency so they can be restored without the original dataset.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .encoders import EncoderConfig
from .errors import CheckpointError

CHECKPOINT_VERSION = 1


def _array_payload(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": [float(x) for x in arr.ravel()]}


def _array_restore(payload: dict) -> np.ndarray:
    try:
        arr = np.array(payload["data"], dtype=np.float64).reshape(payload["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed array entry: {exc}") from None
    return arr


def save_checkpoint(path: str, model, extra: dict | None = None) -> None:
    from .model import _config_dict  # local import to avoid a cycle

    cfg = model.config
    config = _config_dict(cfg)
    config["encoder"] = {f: getattr(cfg.encoder, f)
                         for f in cfg.encoder.__dataclass_fields__}
    payload = {
        "format_version": CHECKPOINT_VERSION,
        "config": config,
        "params": {name: _array_payload(p.data)
                   for name, p in model.named_parameters().items()},
        "extra": dict(extra or {}),
    }
    if cfg.task == "link":
        payload["user_adjacency"] = _array_payload(
            np.asarray(model.project._smoother_source))
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, allow_nan=False)
    os.replace(tmp, path)


def load_checkpoint(path: str) -> dict:
    if not os.path.exists(path):
        raise CheckpointError(f"missing checkpoint file: {path}")
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"{path}: invalid JSON ({exc.msg})") from None
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {version!r} "
            f"(expected {CHECKPOINT_VERSION})")
    for key in ("config", "params"):
        if key not in payload:
            raise CheckpointError(f"{path}: missing {key!r} section")
    return payload


def config_from_payload(payload: dict):
    from .model import ModelConfig

    config = dict(payload["config"])
    try:
        config["encoder"] = EncoderConfig(**config["encoder"])
        return ModelConfig(**config)
    except (KeyError, TypeError) as exc:
        raise CheckpointError(f"malformed config section: {exc}") from None


def restore_model(payload: dict, seed: int = 0):
    """Rebuild a model from a checkpoint payload; every parameter is then
    overwritten, so the init seed only fills values the payload lacks."""
    from .model import PropagationModel

    cfg = config_from_payload(payload)
    user_adjacency = None
    if cfg.task == "link":
        if "user_adjacency" not in payload:
            raise CheckpointError("link checkpoint lacks the user adjacency")
        user_adjacency = _array_restore(payload["user_adjacency"])
    model = PropagationModel(cfg, np.random.default_rng(seed),
                             user_adjacency=user_adjacency)
    missing = load_parameters(model, payload, scope="full")
    if missing:
        raise CheckpointError(f"checkpoint lacks parameters: {sorted(missing)[:5]}")
    return model


def load_parameters(model, payload: dict, scope: str = "full") -> set:
    """Copy checkpoint weights into `model`.

    scope "full": every model parameter must match by name and shape;
    returns the names the payload did not provide.
    scope "trunk": only the shared trunk is loaded; projection and head
    entries are ignored. Trunk names the payload lacks stay freshly
    initialized (relation counts may differ across datasets), but a trunk
    entry whose shape disagrees means the architectures are incompatible.
    """
    if scope not in ("full", "trunk"):
        raise CheckpointError(f"unknown load scope {scope!r}")
    stored = payload["params"]
    trunk_names = {p.name for p in model.trunk_parameters()}
    missing = set()
    for name, param in model.named_parameters().items():
        if scope == "trunk" and name not in trunk_names:
            continue
        if name not in stored:
            missing.add(name)
            continue
        arr = _array_restore(stored[name])
        if arr.shape != param.data.shape:
            raise CheckpointError(
                f"parameter {name!r} has shape {arr.shape}, "
                f"model expects {param.data.shape}")
        param.data[...] = arr
    if scope == "trunk":
        missing &= trunk_names
    return missing


def snapshot_parameters(model) -> dict:
    """In-memory copy of all weights (for best-epoch bookkeeping)."""
    return {name: p.data.copy() for name, p in model.named_parameters().items()}


def restore_snapshot(model, snapshot: dict) -> None:
    for name, p in model.named_parameters().items():
        p.data[...] = snapshot[name]
