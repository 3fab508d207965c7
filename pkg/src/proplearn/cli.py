"""Command line entry point.

One command drives the whole workflow: load or simulate a dataset, train
(optionally warm-started from a checkpoint, optionally zero- or few-shot),
or sweep a gamma/lambda grid. Settings resolve in three layers: built-in
defaults, then a flat key=value config file, then explicit flags.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
divergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict

from .checkpoint import load_checkpoint, save_checkpoint
from .encoders import EncoderConfig
from .errors import ConfigError, DataError, NumericError
from .io import load_task_dataset, save_task_dataset
from .synthetic import SyntheticConfig, simulate_synthetic
from .training import (
    RunConfig,
    run_training,
    sweep,
    write_sweep_csv,
    write_sweep_summary_csv,
)

_INT_KEYS = {"seed", "epochs", "patience", "ego_k", "t_max", "d_model",
             "n_heads", "context_depth", "graph_depth", "prop_depth", "d_ff"}
_FLOAT_KEYS = {"gamma", "lam", "lr", "few_shot"}
_BOOL_KEYS = {"zero_shot"}
_STR_KEYS = {"task", "data", "out", "pretrain_from", "ablation", "sweep",
             "simulate", "activation"}
_RUN_KEYS = {"seed", "epochs", "lr", "patience", "gamma", "lam", "ablation",
             "ego_k", "t_max", "few_shot", "zero_shot"}
_ENCODER_KEYS = {"d_model", "n_heads", "context_depth", "graph_depth",
                 "prop_depth", "d_ff", "activation"}
_TRUE_WORDS = {"1", "true", "yes", "on"}
_FALSE_WORDS = {"0", "false", "no", "off"}


def _coerce(key: str, text: str):
    try:
        if key in _INT_KEYS:
            return int(text)
        if key in _FLOAT_KEYS:
            return float(text)
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot parse {text!r}") from None
    if key in _BOOL_KEYS:
        lowered = text.lower()
        if lowered in _TRUE_WORDS:
            return True
        if lowered in _FALSE_WORDS:
            return False
        raise ConfigError(f"config key {key!r}: expected a boolean, "
                          f"got {text!r}")
    return text


def parse_config_file(path: str) -> dict:
    """Flat key=value lines; '#' starts a comment; 'lambda' is accepted as
    an alias for 'lam'."""
    if not os.path.exists(path):
        raise ConfigError(f"missing config file: {path}")
    settings = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, "
                                  f"got {raw.strip()!r}")
            key, _, value = line.partition("=")
            key = key.strip()
            if key == "lambda":
                key = "lam"
            if key not in _INT_KEYS | _FLOAT_KEYS | _BOOL_KEYS | _STR_KEYS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            settings[key] = _coerce(key, value.strip())
    return settings


def parse_simulate_spec(text: str, task: str, default_seed: int) -> SyntheticConfig:
    """Comma-separated key=value pairs for the simulator; list-valued keys
    (topology, beta) separate entries with '|'. Empty spec = defaults."""
    kwargs: dict = {"task": task, "seed": default_seed}
    int_keys = {"n_instances", "min_nodes", "max_nodes", "network_size",
                "steps", "n_seeds", "seed", "ws_k"}
    float_keys = {"dt", "feature_noise", "label_noise", "ws_p"}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise ConfigError(f"simulate spec: expected key=value, got {part!r}")
        key, _, value = part.partition("=")
        key, value = key.strip(), value.strip()
        if key not in int_keys | float_keys | {"beta", "topology", "label_rule"}:
            raise ConfigError(f"simulate spec: unknown key {key!r}")
        try:
            if key in int_keys:
                kwargs[key] = int(value)
            elif key in float_keys:
                kwargs[key] = float(value)
            elif key == "beta":
                kwargs[key] = tuple(float(b) for b in value.split("|"))
            elif key == "topology":
                kwargs[key] = tuple(value.split("|"))
            else:
                kwargs[key] = value
        except ValueError:
            raise ConfigError(f"simulate spec: cannot parse {part!r}") from None
    return SyntheticConfig(**kwargs)


def parse_sweep_grid(text: str, cfg: RunConfig) -> tuple:
    """Grid spec like 'gamma=0,0.5,1;lambda=0,0.5;seeds=0,1,2'. Every part
    is optional and falls back to the run's single value."""
    gammas = [cfg.gamma]
    lams = [cfg.lam]
    seeds = [cfg.seed]
    for part in filter(None, (p.strip() for p in text.split(";"))):
        if "=" not in part:
            raise ConfigError(f"sweep spec: expected name=v1,v2,..., "
                              f"got {part!r}")
        name, _, values = part.partition("=")
        name = name.strip().rstrip("s")  # accept singular and plural
        if name not in ("gamma", "lambda", "lam", "seed"):
            raise ConfigError(f"sweep spec: unknown grid {name!r}")
        try:
            if name == "gamma":
                gammas = [float(v) for v in values.split(",")]
            elif name in ("lambda", "lam"):
                lams = [float(v) for v in values.split(",")]
            else:
                seeds = [int(v) for v in values.split(",")]
        except ValueError:
            raise ConfigError(f"sweep spec: cannot parse {part!r}") from None
    return gammas, lams, seeds


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proplearn",
        description="Train and evaluate propagation-aware graph models "
                    "with kinetic-model supervision.")
    parser.add_argument("--config", help="flat key=value settings file "
                                         "(flags override file values)")
    parser.add_argument("--task", choices=("graph", "node", "link"),
                        help="which prediction task to run")
    parser.add_argument("--data", help="dataset directory (graph: "
                        "trees.jsonl; node: nodes.tsv+edges.tsv; link: "
                        "cascades.txt+edges.tsv)")
    parser.add_argument("--simulate", nargs="?", const="", default=None,
                        metavar="SPEC",
                        help="generate a synthetic dataset instead of "
                             "--data; SPEC is comma-separated key=value "
                             "pairs (e.g. 'n_instances=200,beta=0.4|0.1'); "
                             "bare --simulate uses defaults")
    parser.add_argument("--out", help="output directory (default: run)")
    parser.add_argument("--gamma", type=float,
                        help="fusion weight on the structural encoder")
    parser.add_argument("--lambda", dest="lam", type=float,
                        help="weight of the kinetic residual loss")
    parser.add_argument("--seed", type=int, help="run seed")
    parser.add_argument("--epochs", type=int, help="training epochs")
    parser.add_argument("--lr", type=float, help="optimizer step size")
    parser.add_argument("--patience", type=int,
                        help="early-stopping patience (epochs)")
    parser.add_argument("--pretrain-from", metavar="CHECKPOINT",
                        help="warm-start from this checkpoint (trunk only, "
                             "or all weights with --zero-shot)")
    parser.add_argument("--few-shot", type=float, metavar="FRACTION",
                        help="train on only this fraction of the train split")
    parser.add_argument("--zero-shot", action="store_true", default=None,
                        help="evaluate the pretrained weights without any "
                             "training steps")
    parser.add_argument("--ablation",
                        choices=("none", "no-pretrain", "no-prop-embedding",
                                 "regular-kinetic", "literal-ode"),
                        help="which pathway ablation to apply")
    parser.add_argument("--sweep", metavar="GRID",
                        help="run a grid instead of a single fit, e.g. "
                             "'gamma=0,0.5,1;lambda=0,0.5;seeds=0,1'")
    return parser


def _resolve_settings(args: argparse.Namespace) -> dict:
    settings = parse_config_file(args.config) if args.config else {}
    for key in ("task", "data", "simulate", "out", "gamma", "lam", "seed",
                "epochs", "lr", "patience", "pretrain_from", "few_shot",
                "zero_shot", "ablation", "sweep"):
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    return settings


def _build_run_config(settings: dict) -> RunConfig:
    task = settings.get("task")
    if not task:
        raise ConfigError("a task is required (--task or task= in the "
                          "config file)")
    try:
        encoder = EncoderConfig(**{k: settings[k] for k in _ENCODER_KEYS
                                   if k in settings})
    except TypeError as exc:
        raise ConfigError(f"bad encoder settings: {exc}") from None
    return RunConfig(task=task, encoder=encoder,
                     **{k: settings[k] for k in _RUN_KEYS if k in settings})


def _load_dataset(settings: dict, cfg: RunConfig, out_dir: str):
    has_data = "data" in settings
    has_sim = "simulate" in settings
    if has_data == has_sim:
        raise ConfigError("exactly one of --data and --simulate is required")
    if has_data:
        return load_task_dataset(cfg.task, settings["data"]), settings["data"]
    sim_cfg = parse_simulate_spec(settings["simulate"], cfg.task, cfg.seed)
    dataset = simulate_synthetic(sim_cfg)
    saved = os.path.join(out_dir, "data")
    save_task_dataset(dataset, saved)
    return dataset, f"simulate({settings['simulate'] or 'defaults'})"


def _run(args: argparse.Namespace) -> int:
    settings = _resolve_settings(args)
    cfg = _build_run_config(settings)
    out_dir = settings.get("out", "run")
    os.makedirs(out_dir, exist_ok=True)

    dataset, data_origin = _load_dataset(settings, cfg, out_dir)
    payload = None
    if "pretrain_from" in settings:
        payload = load_checkpoint(settings["pretrain_from"])

    log_path = os.path.join(out_dir, "log.txt")
    with open(log_path, "w", encoding="utf-8") as log_file:
        def log(line: str) -> None:
            print(line)
            log_file.write(line + "\n")

        if "sweep" in settings:
            grids = parse_sweep_grid(settings["sweep"], cfg)
            rows = sweep(cfg, dataset, *grids, log=log)
            write_sweep_csv(os.path.join(out_dir, "sweep.csv"), rows, cfg.task)
            write_sweep_summary_csv(os.path.join(out_dir, "sweep_summary.csv"),
                                    rows, cfg.task)
            print(f"wrote {os.path.join(out_dir, 'sweep.csv')} and "
                  f"sweep_summary.csv ({len(rows)} runs)")
            return 0

        model, result = run_training(cfg, dataset, log=log,
                                     pretrain_payload=payload)

    report = {
        "task": cfg.task,
        "data": data_origin,
        "config": asdict(cfg),
        "best_epoch": result.best_epoch,
        "best_val": result.best_val,
        "stopped_early": result.stopped_early,
        "split_sizes": {k: len(v) for k, v in result.splits.items()},
        "metrics": result.metrics,
        "history": [{"epoch": r.epoch, "train_loss": r.train_loss,
                     "val": r.val_metrics} for r in result.history],
    }
    metrics_path = os.path.join(out_dir, "metrics.json")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)

    checkpoint_path = os.path.join(out_dir, "checkpoint.json")
    save_checkpoint(checkpoint_path, model, extra={
        "run_config": asdict(cfg),
        "data": data_origin,
        "metrics": result.metrics,
        "history": report["history"],
    })
    print(f"wrote {metrics_path} and {checkpoint_path}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
