"""From-scratch NN core: numpy tensors, autodiff, layers, oracles, counters."""

from .tensor import (
    Tensor, no_grad,
    add, sub, mul, div, neg,
    relu, sigmoid, tanh, softmax, log, exp, sqrt,
    clamp_min, t_sum, t_mean, reshape, concat, narrow,
    broadcast_to, linear, conv1d, conv2d, batchnorm, mean_over_time,
)
from .layers import Parameter, Module, ModuleList, Conv1d, Conv2d, BatchNorm, Linear, uniform_init
from .gradcheck import gradcheck, max_rel_error, DEFAULT_EPS, DEFAULT_TOL
from .complexity import count_params, count_macs, ComplexityReport, ReportPart, REFERENCE_FRAMES

__all__ = [
    "Tensor", "no_grad",
    "add", "sub", "mul", "div", "neg",
    "relu", "sigmoid", "tanh", "softmax", "log", "exp", "sqrt",
    "clamp_min", "t_sum", "t_mean", "reshape", "concat", "narrow",
    "broadcast_to", "linear", "conv1d", "conv2d", "batchnorm", "mean_over_time",
    "Parameter", "Module", "ModuleList", "Conv1d", "Conv2d", "BatchNorm", "Linear",
    "uniform_init", "gradcheck", "max_rel_error", "DEFAULT_EPS", "DEFAULT_TOL",
    "count_params", "count_macs", "ComplexityReport", "ReportPart", "REFERENCE_FRAMES",
]
