"""Minimal reverse-mode autodiff over dense float64 numpy arrays."""

from . import ops
from .nn import MLP, Conv2d, ConvTranspose2d, Linear, Module, parameter
from .ops import (
    absolute,
    add,
    bilinear_matrix,
    concat,
    conv2d,
    conv_transpose2d,
    div,
    exp,
    flatten,
    gelu,
    getitem,
    linear_map,
    log,
    matmul,
    max_pool2d,
    mean,
    mul,
    reshape,
    resize_bilinear,
    scale,
    softmax,
    softplus,
    square,
    sub,
    transpose,
)
from .ops import sum as reduce_sum
from .optim import Adam, AdamState, adam_step
from .tensor import DiffTensor, GradientError, ShapeError, Tape, TapeEntry, as_tensor, backward

__all__ = [
    "Adam", "AdamState", "Conv2d", "ConvTranspose2d", "DiffTensor", "GradientError", "Linear",
    "MLP", "Module", "ShapeError", "Tape", "TapeEntry", "absolute", "adam_step", "add",
    "as_tensor", "backward", "bilinear_matrix", "concat", "conv2d", "conv_transpose2d", "div",
    "exp", "flatten", "gelu", "getitem", "linear_map", "log", "matmul", "max_pool2d", "mean",
    "mul", "ops", "parameter", "reduce_sum", "reshape", "resize_bilinear", "scale", "softmax",
    "softplus", "square", "sub", "transpose",
]
