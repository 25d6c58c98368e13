"""From-scratch reverse-mode autodiff on dense float64 tensors."""

from .nn import (
    GradCheckReport,
    Layer,
    Network,
    ParamSet,
    conv_layer,
    grad_check,
    kaiming_init,
    linear_layer,
    relative_error,
)
from .ops import (
    add,
    add_n,
    avg_pool2d,
    conv2d,
    cross_entropy,
    flatten,
    global_avg_pool,
    linear,
    matmul,
    mse_loss,
    relu,
    reshape,
    scale,
    tensor_sum,
)
from .tensor import Graph, Tensor, backward, no_grad

__all__ = [
    "Graph", "Tensor", "backward", "no_grad",
    "add", "add_n", "avg_pool2d", "conv2d", "cross_entropy", "flatten", "global_avg_pool",
    "linear", "matmul", "mse_loss", "relu", "reshape", "scale", "tensor_sum",
    "GradCheckReport", "Layer", "Network", "ParamSet", "conv_layer", "grad_check",
    "kaiming_init", "linear_layer", "relative_error",
]
