"""Shared oracles for the test suite."""

import numpy as np

from zico_nas.engine import ops


def instantiated_params(network) -> int:
    """Scalar count over the tensors a built network actually holds."""
    return sum(int(np.prod(t.shape)) for _, t in network.params.named())


def traced_macs(network, input_shape) -> int:
    """Multiply-accumulates counted while a single input flows through the network.

    Wraps the engine's conv2d and matmul so every executed product is
    tallied from the shapes it actually saw.
    """
    total = 0
    conv, matmul = ops.conv2d, ops.matmul

    def counting_conv(x, kernel, bias=None, stride=1, pad=0, method="im2col"):
        nonlocal total
        out = conv(x, kernel, bias, stride=stride, pad=pad, method=method)
        cout, cin, kh, kw = kernel.shape
        total += out.data[0].size * cin * kh * kw
        return out

    def counting_matmul(a, b):
        nonlocal total
        out = matmul(a, b)
        total += out.data[0].size * a.shape[1]
        return out

    ops.conv2d, ops.matmul = counting_conv, counting_matmul
    try:
        network(np.zeros((1,) + tuple(input_shape)))
    finally:
        ops.conv2d, ops.matmul = conv, matmul
    return total
