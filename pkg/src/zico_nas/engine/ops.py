"""Differentiable operations.

Every op computes its forward result with numpy and registers a closure that
maps the output gradient to one gradient per input (``None`` where the input
is constant).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DimensionError, ShapeError, ValidationError
from .tensor import Tensor, as_tensor, make_result


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    try:
        out = a.data + b.data
    except ValueError:
        raise DimensionError(f"cannot add shapes {a.shape} and {b.shape}") from None
    sa, sb = a.shape, b.shape

    def back(g):
        return _unbroadcast(g, sa), _unbroadcast(g, sb)

    return make_result("add", out, (a, b), back)


def add_n(tensors) -> Tensor:
    tensors = list(tensors)
    out = tensors[0]
    for t in tensors[1:]:
        out = add(out, t)
    return out


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)
    return make_result("scale", x.data * c, (x,), lambda g: (g * c,))


def tensor_sum(x) -> Tensor:
    x = as_tensor(x)
    shape = x.shape
    return make_result("sum", np.array(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"cannot reshape {old} to {tuple(shape)}") from None
    return make_result("reshape", out, (x,), lambda g: (g.reshape(old),))


def flatten(x) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim < 1:
        raise DimensionError("flatten needs at least one axis")
    return reshape(x, (x.shape[0], -1))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    A, B = a.data, b.data

    def back(g):
        return g @ B.T, A.T @ g

    return make_result("matmul", A @ B, (a, b), back)


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as (in, out)."""
    out = matmul(x, weight)
    return add(out, bias) if bias is not None else out


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0  # subgradient 0 at exactly 0
    return make_result("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def _out_extent(n: int, k: int, stride: int, pad: int, what: str) -> int:
    if stride < 1 or pad < 0:
        raise ShapeError(f"{what}: stride must be >= 1 and pad >= 0, got stride={stride}, pad={pad}")
    span = n + 2 * pad - k
    if span < 0:
        raise ShapeError(f"{what}: window {k} exceeds padded extent {n + 2 * pad}")
    if span % stride:
        raise ShapeError(f"{what}: ({n}+2*{pad}-{k})/{stride} is not integral")
    return span // stride + 1


def _windows(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # (N, C, Ho, Wo, kh, kw) view
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def _pad(x: np.ndarray, pad: int) -> np.ndarray:
    if pad == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def _fold(dwin: np.ndarray, padded_shape, kh, kw, stride, pad) -> np.ndarray:
    """Scatter-add window gradients (N, C, Ho, Wo, kh, kw) back to the input."""
    dxp = np.zeros(padded_shape)
    ho, wo = dwin.shape[2], dwin.shape[3]
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += dwin[..., i, j]
    if pad:
        dxp = dxp[:, :, pad:-pad, pad:-pad]
    return dxp


def _conv_direct(x: np.ndarray, w: np.ndarray, stride: int, pad: int, ho: int, wo: int) -> np.ndarray:
    """Reference cross-correlation: explicit sum over kernel taps."""
    n = x.shape[0]
    cout, cin, kh, kw = w.shape
    xp = _pad(x, pad)
    out = np.zeros((n, cout, ho, wo))
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
            out += np.einsum("nchw,oc->nohw", patch, w[:, :, i, j])
    return out


def conv2d(x, kernel, bias=None, stride: int = 1, pad: int = 0, method: str = "im2col") -> Tensor:
    """2-D cross-correlation (no kernel flip) of (N, Cin, H, W) with (Cout, Cin, kh, kw)."""
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and kernel, got {x.shape} and {kernel.shape}")
    n, cin, h, w = x.shape
    cout, kcin, kh, kw = kernel.shape
    if cin != kcin:
        raise DimensionError(f"conv2d channel mismatch: input {x.shape}, kernel {kernel.shape}")
    ho = _out_extent(h, kh, stride, pad, "conv2d height")
    wo = _out_extent(w, kw, stride, pad, "conv2d width")
    X, K = x.data, kernel.data

    if method == "direct":
        out = _conv_direct(X, K, stride, pad, ho, wo)
        cols = None
    elif method == "im2col":
        xp = _pad(X, pad)
        win = _windows(xp, kh, kw, stride)
        cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * kh * kw)
        out = (cols @ K.reshape(cout, -1).T).reshape(n, ho, wo, cout).transpose(0, 3, 1, 2)
    else:
        raise ValidationError(f"unknown conv2d method {method!r}")

    inputs = [x, kernel]
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (cout,):
            raise DimensionError(f"conv2d bias must have shape ({cout},), got {bias.shape}")
        out = out + bias.data[None, :, None, None]
        inputs.append(bias)
    padded_shape = (n, cin, h + 2 * pad, w + 2 * pad)

    def back(g):
        g2 = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, cout)
        c = cols
        if c is None:
            win = _windows(_pad(X, pad), kh, kw, stride)
            c = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, cin * kh * kw)
        dk = (g2.T @ c).reshape(K.shape) if kernel.requires_grad else None
        dx = None
        if x.requires_grad:
            dcols = (g2 @ K.reshape(cout, -1)).reshape(n, ho, wo, cin, kh, kw).transpose(0, 3, 1, 2, 4, 5)
            dx = _fold(dcols, padded_shape, kh, kw, stride, pad)
        grads = [dx, dk]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    return make_result("conv2d", out, inputs, back)


def avg_pool2d(x, k: int, stride: int = None, pad: int = 0) -> Tensor:
    """Average pooling; padded cells count toward the divisor (k*k)."""
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise DimensionError(f"avg_pool2d expects (N, C, H, W), got {x.shape}")
    stride = k if stride is None else stride
    n, c, h, w = x.shape
    ho = _out_extent(h, k, stride, pad, "avg_pool2d height")
    wo = _out_extent(w, k, stride, pad, "avg_pool2d width")
    out = _windows(_pad(x.data, pad), k, k, stride).mean(axis=(4, 5))
    padded_shape = (n, c, h + 2 * pad, w + 2 * pad)

    def back(g):
        dwin = np.broadcast_to((g / (k * k))[..., None, None], (n, c, ho, wo, k, k))
        return (_fold(dwin, padded_shape, k, k, stride, pad),)

    return make_result("avg_pool2d", out, (x,), back)


def global_avg_pool(x) -> Tensor:
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise DimensionError(f"global_avg_pool expects (N, C, H, W), got {x.shape}")
    n, c, h, w = x.shape

    def back(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), (n, c, h, w)).copy(),)

    return make_result("global_avg_pool", x.data.mean(axis=(2, 3)), (x,), back)


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-softmax of the true class."""
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.data.ndim != 2:
        raise DimensionError(f"cross_entropy expects (N, K) logits, got {logits.shape}")
    n, k = logits.shape
    if n < 1:
        raise ValidationError("cross_entropy needs at least one sample")
    if labels.shape != (n,):
        raise DimensionError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= k:
        raise ValidationError(f"labels must be integers in [0, {k})")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    nll = lse - z[rows, labels]
    loss = np.array(nll.mean())

    def back(g):
        p = np.exp(z - lse[:, None])
        p[rows, labels] -= 1.0
        return (p * (g / n),)

    return make_result("cross_entropy", loss, (logits,), back)


def mse_loss(pred, target) -> Tensor:
    """Sum of half squared residuals."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise DimensionError(f"mse_loss shape mismatch: {pred.shape} vs {target.shape}")
    r = pred.data - target.data
    return make_result("mse_loss", np.array(0.5 * np.dot(r.ravel(), r.ravel())), (pred, target),
                       lambda g: (g * r, -g * r))
