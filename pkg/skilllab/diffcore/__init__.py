"""
Minimal dense numerical core with reverse-mode differentiation
"""

from .tensor import (
    Tensor, Tape, record_op, reset_tape, current_tape, no_grad, precision, backward,
    add, sub, mul, matmul, power, tanh, sigmoid, relu, exp, log, detach,
    sum_, mean, reshape, transpose, slice_, concat, gather,
    layer_norm, softmax, log_softmax, mse, bce, cross_entropy,
)
from .nn import glorot, normal_init, dense, sinusoidal_features, multihead_attention
from .optim import ParameterSet, adam_step, clip_grad_norm
from .gradcheck import grad_check, grad_check_errors
