from .checkpoint import load_params, save_params
from .gradcheck import grad_check, relative_error
from .layers import (
    AdaptiveMaxPool2d,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool2d,
    ReLU,
    Sequential,
    adaptive_bins,
)
from .optim import Adam, AdamState, adam_step, lr_schedule, mse_loss
from .tensor import Tensor

__all__ = [
    "AdaptiveMaxPool2d",
    "Adam",
    "AdamState",
    "Conv2d",
    "Dense",
    "Dropout",
    "Flatten",
    "Layer",
    "MaxPool2d",
    "ReLU",
    "Sequential",
    "Tensor",
    "adam_step",
    "adaptive_bins",
    "grad_check",
    "load_params",
    "lr_schedule",
    "mse_loss",
    "relative_error",
    "save_params",
]
