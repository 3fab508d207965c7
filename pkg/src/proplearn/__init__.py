"""Propagation-aware representation learning on information networks.

A dual-encoder graph model whose training objective adds the residuals of
a Markov-chain kinetic model of competing information spread, with task
adapters for whole-tree classification, node classification, and
next-user prediction in cascades.
"""

__version__ = "0.1.0"

from .checkpoint import load_checkpoint, restore_model, save_checkpoint
from .encoders import EncoderConfig
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    MetricUndefinedError,
    NumericError,
)
from .estimators import (
    CascadeLinkPredictor,
    PropagationTreeClassifier,
    SocialNodeClassifier,
)
from .graphs import (
    Cascade,
    CascadeCorpus,
    InfoPropView,
    PropagationTree,
    SocialNetwork,
    TaskDataset,
    build_view,
)
from .heads import FusionConfig
from .io import load_task_dataset, save_task_dataset
from .kinetics import integrate, kinetic_derivatives, seed_states
from .metrics import PRIMARY_METRIC, evaluate_classification, evaluate_ranking
from .model import ModelConfig, PropagationModel, prepare_instances
from .synthetic import SyntheticConfig, simulate_synthetic
from .tensor import GradCheckReport, Parameter, Tensor, grad_check
from .training import RunConfig, run_training, sweep, train_model

__all__ = [
    "Cascade",
    "CascadeCorpus",
    "CascadeLinkPredictor",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "EncoderConfig",
    "FusionConfig",
    "GradCheckReport",
    "InfoPropView",
    "MetricUndefinedError",
    "ModelConfig",
    "NumericError",
    "PRIMARY_METRIC",
    "Parameter",
    "PropagationModel",
    "PropagationTree",
    "PropagationTreeClassifier",
    "RunConfig",
    "SocialNetwork",
    "SocialNodeClassifier",
    "SyntheticConfig",
    "TaskDataset",
    "Tensor",
    "build_view",
    "evaluate_classification",
    "evaluate_ranking",
    "grad_check",
    "integrate",
    "kinetic_derivatives",
    "load_checkpoint",
    "load_task_dataset",
    "prepare_instances",
    "restore_model",
    "run_training",
    "save_checkpoint",
    "save_task_dataset",
    "seed_states",
    "simulate_synthetic",
    "sweep",
    "train_model",
    "__version__",
]
