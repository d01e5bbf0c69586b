"""Encoder-decoder network: layers, model, training and checkpoints."""

from ..evaluate import argmax_labels
from .checkpoint import load_checkpoint, save_checkpoint
from .layers import (
    conv2d_backward,
    conv2d_forward,
    maxpool2x2,
    relu,
    relu_backward,
    softmax_per_pixel,
    unpool2x2,
    weighted_cross_entropy,
)
from .model import NetworkConfig, infer, init_params
from .train import TrainConfig, sgd_step, train

__all__ = [
    "NetworkConfig",
    "TrainConfig",
    "argmax_labels",
    "conv2d_backward",
    "conv2d_forward",
    "infer",
    "init_params",
    "load_checkpoint",
    "maxpool2x2",
    "relu",
    "relu_backward",
    "save_checkpoint",
    "sgd_step",
    "softmax_per_pixel",
    "train",
    "unpool2x2",
    "weighted_cross_entropy",
]
