"""Minimal dense-tensor engine: seven layer kinds plus the Nadam optimizer."""

from .functional import (
    batchnorm_backward,
    batchnorm_forward,
    conv2d_backward,
    conv2d_forward,
    cross_entropy_loss,
    dense_backward,
    dense_forward,
    dropout,
    dropout_backward,
    relu_backward,
    relu_forward,
    softmax,
    softmax_backward,
    softmax_cross_entropy,
)
from .layers import BN_EPS, BN_MOMENTUM, LayerSpec, build_layer
from .optim import NadamState, nadam_step
from .tensor import Tensor

__all__ = [
    "Tensor", "LayerSpec", "build_layer", "BN_EPS", "BN_MOMENTUM",
    "NadamState", "nadam_step",
    "conv2d_forward", "conv2d_backward",
    "batchnorm_forward", "batchnorm_backward",
    "relu_forward", "relu_backward",
    "dense_forward", "dense_backward",
    "dropout", "dropout_backward",
    "softmax", "softmax_backward",
    "cross_entropy_loss", "softmax_cross_entropy",
]
