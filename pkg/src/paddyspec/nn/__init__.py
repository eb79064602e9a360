"""Minimal dense-tensor engine: the exact op set ResNet18 needs, with
analytically implemented backward passes, a weighted cross-entropy loss,
and an Adam optimizer."""

from .tensor import (
    BackwardError,
    NonFiniteError,
    ShapeError,
    Tensor,
    as_tensor,
    grad_enabled,
    no_grad,
    set_strict_finite,
    strict_finite_enabled,
)
from .ops import (
    BatchNormParams,
    add,
    batchnorm2d,
    conv2d,
    conv_output_size,
    global_avgpool,
    linear,
    maxpool2d,
    maxpool2d_with_indices,
    relu,
    softmax,
    tensor_sum,
    weighted_cross_entropy,
    weighted_sum,
)
from .optim import Adam
from .gradcheck import DEFAULT_TOLERANCE, check_gradients, numeric_gradient, relative_error
from .serialize import CheckpointError, read_checkpoint, write_checkpoint

__all__ = [
    "Adam",
    "BackwardError",
    "BatchNormParams",
    "CheckpointError",
    "DEFAULT_TOLERANCE",
    "NonFiniteError",
    "ShapeError",
    "Tensor",
    "add",
    "as_tensor",
    "batchnorm2d",
    "check_gradients",
    "conv2d",
    "conv_output_size",
    "global_avgpool",
    "grad_enabled",
    "linear",
    "maxpool2d",
    "maxpool2d_with_indices",
    "no_grad",
    "numeric_gradient",
    "read_checkpoint",
    "relative_error",
    "relu",
    "set_strict_finite",
    "softmax",
    "strict_finite_enabled",
    "tensor_sum",
    "weighted_cross_entropy",
    "weighted_sum",
    "write_checkpoint",
]
