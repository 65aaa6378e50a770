"""Numpy CLDNN: layers, model, Adam, training loop and checkpoints."""

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .cldnn import CldnnSpec, ModelParams, NonFiniteLossError, ShapeError, backward, forward, init_params
from .optim import AdamState, adam_step
from .training import (EarlyStopper, EvalResult, History, TrainingConfig, TrainingDivergedError,
                       evaluate, evaluate_arrays, network_input, train, train_arrays)

__all__ = [
    "AdamState", "CheckpointError", "CldnnSpec", "EarlyStopper", "EvalResult", "History",
    "ModelParams", "NonFiniteLossError", "ShapeError", "TrainingConfig", "TrainingDivergedError",
    "adam_step", "backward", "evaluate", "evaluate_arrays", "forward", "init_params",
    "load_checkpoint", "network_input", "save_checkpoint", "train", "train_arrays",
]
