"""Minimal convolutional-autoencoder training stack on numpy."""

from .layers import (
    ACTIVATIONS,
    NumericError,
    ShapeError,
    conv2d_forward,
    maxpool_forward,
    upsample_forward,
)
from .losses import LOSS_KINDS, reconstruction_loss, reconstruction_loss_grad, softmax_cross_entropy
from .network import (
    LAYER_KINDS,
    ForwardCache,
    LayerDescriptor,
    NetworkSpec,
    TrainState,
    backward_pass,
    forward_pass,
    init_state,
    trace_shapes,
    update_running_stats,
)
from .optim import OPTIMIZERS, optimizer_step
from .snapshot import load_state, save_state
from .train import TrainResult, evaluate_loss, train_epochs

__all__ = [
    "ACTIVATIONS",
    "LAYER_KINDS",
    "LOSS_KINDS",
    "OPTIMIZERS",
    "ForwardCache",
    "LayerDescriptor",
    "NetworkSpec",
    "NumericError",
    "ShapeError",
    "TrainResult",
    "TrainState",
    "backward_pass",
    "conv2d_forward",
    "evaluate_loss",
    "forward_pass",
    "init_state",
    "load_state",
    "maxpool_forward",
    "optimizer_step",
    "reconstruction_loss",
    "reconstruction_loss_grad",
    "save_state",
    "softmax_cross_entropy",
    "trace_shapes",
    "train_epochs",
    "update_running_stats",
    "upsample_forward",
]
