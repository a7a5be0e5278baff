"""Reverse-mode differentiation, layers, optimiser and checkpoint container."""

from . import nn
from .checkpoint import load as load_checkpoint
from .checkpoint import save as save_checkpoint
from .optim import Adam, AdamState, cosine_lr
from .tensor import (
    TAPE,
    NonFiniteError,
    Tensor,
    add,
    backward,
    concat,
    cross_entropy,
    default_dtype,
    div,
    embedding,
    exp,
    gelu,
    getitem,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mse,
    mul,
    neg,
    no_grad,
    power,
    reshape,
    rope,
    round_ste,
    sigmoid,
    silu,
    softmax,
    sub,
    tanh,
    transpose,
    tsum,
)

__all__ = [
    "TAPE", "Adam", "AdamState", "NonFiniteError", "Tensor", "add", "backward", "concat", "cosine_lr",
    "cross_entropy", "default_dtype", "div", "embedding", "exp", "gelu", "getitem", "layer_norm",
    "load_checkpoint", "log", "log_softmax", "matmul", "mean", "mse", "mul", "neg", "nn", "no_grad",
    "power", "reshape", "rope", "round_ste", "save_checkpoint", "sigmoid", "silu", "softmax", "sub",
    "tanh", "transpose", "tsum",
]
