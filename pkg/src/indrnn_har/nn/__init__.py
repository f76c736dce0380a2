"""From-scratch IndRNN network core (numpy, manual backpropagation)."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .layers import (
    BatchNorm, DenseLayer, Dropout, IndRNN, LastStep, Linear, ResidualUnit, Sequential,
    clip_recurrent, indrnn_backward, indrnn_forward, recurrent_unit,
)
from .loss import cross_entropy, softmax
from .network import Network, NetworkConfig, build_network
from .optim import Adam, LRSchedule, adam_step, lr_schedule

__all__ = [
    "Adam", "BatchNorm", "Checkpoint", "DenseLayer", "Dropout", "IndRNN", "LRSchedule", "LastStep",
    "Linear", "Network", "NetworkConfig", "ResidualUnit", "Sequential", "adam_step", "build_network",
    "clip_recurrent", "cross_entropy", "indrnn_backward", "indrnn_forward", "load_checkpoint",
    "lr_schedule", "recurrent_unit", "save_checkpoint", "softmax",
]
