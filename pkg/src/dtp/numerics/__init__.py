"""Minimal differentiable array engine used by every model stage."""

from .conv import conv2d, pixel_shuffle, pixel_unshuffle
from .gradcheck import (GradCheckReport, NondeterministicFunction, finite_diff_check,
                        relative_error)
from .params import CheckpointError, ParamStore
from .tensor import (DEFAULT_DTYPE, Tensor, abs_, add, as_tensor, backward, clamp, concat, div,
                     exp, getitem, interleave, leaky_relu, log, max_, mean, mul, neg, power,
                     record_branches, relu, reshape, sigmoid, softmax, softplus, sqrt, stop_gradient, sub, sum_,
                     take, transpose)

__all__ = [
    "DEFAULT_DTYPE", "Tensor", "ParamStore", "CheckpointError", "GradCheckReport",
    "NondeterministicFunction", "abs_", "add", "as_tensor", "backward", "clamp", "concat",
    "conv2d", "div", "exp", "finite_diff_check", "getitem", "interleave", "leaky_relu", "log",
    "max_", "mean", "mul", "neg", "pixel_shuffle", "pixel_unshuffle", "power",
    "record_branches", "relative_error", "relu", "reshape", "sigmoid", "softmax", "softplus", "sqrt",
    "stop_gradient", "sub", "sum_", "take", "transpose",
]
