"""Parameter containers, initialization and gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

import numpy as np

from ..errors import ValidationError
from . import ops
from .tensor import Tensor


@dataclass
class Layer:
    """One weight-bearing layer; ``index`` is its 1-based position in the network."""

    index: int
    kind: str  # "conv" or "linear"
    weight: Tensor
    bias: Optional[Tensor]
    fan_in: int
    stride: int = 1
    pad: int = 0

    def tensors(self) -> Iterator[tuple]:
        yield f"layer{self.index}.{self.kind}.weight", self.weight
        if self.bias is not None:
            yield f"layer{self.index}.{self.kind}.bias", self.bias

    def __call__(self, x):
        if self.kind == "conv":
            return ops.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)
        return ops.linear(x, self.weight, self.bias)


def conv_layer(index, cin, cout, k, stride=1, pad=None, bias=True) -> Layer:
    pad = k // 2 if pad is None else pad
    w = Tensor(np.zeros((cout, cin, k, k)), requires_grad=True)
    b = Tensor(np.zeros(cout), requires_grad=True) if bias else None
    return Layer(index, "conv", w, b, fan_in=cin * k * k, stride=stride, pad=pad)


def linear_layer(index, fan_in, fan_out, bias=True) -> Layer:
    w = Tensor(np.zeros((fan_in, fan_out)), requires_grad=True)
    b = Tensor(np.zeros(fan_out), requires_grad=True) if bias else None
    return Layer(index, "linear", w, b, fan_in=fan_in)


@dataclass
class ParamSet:
    layers: list = field(default_factory=list)

    def __post_init__(self):
        for pos, layer in enumerate(self.layers, start=1):
            if layer.index != pos:
                raise ValidationError(f"layer indices must be contiguous 1..D, got {layer.index} at position {pos}")

    def __len__(self):
        return len(self.layers)

    def named(self) -> Iterator[tuple]:
        for layer in self.layers:
            yield from layer.tensors()

    def tensors(self) -> list:
        return [t for _, t in self.named()]

    def by_layer(self) -> dict:
        return {layer.index: [t for _, t in layer.tensors()] for layer in self.layers}

    def count(self) -> int:
        return sum(t.size for t in self.tensors())

    def zero_grad(self):
        for t in self.tensors():
            t.grad = None

    def snapshot(self) -> list:
        return [t.data.copy() for t in self.tensors()]

    def restore(self, arrays):
        for t, a in zip(self.tensors(), arrays):
            t.data = a.copy()


class Network:
    """A ParamSet plus a forward closure mapping an input tensor to logits."""

    def __init__(self, params: ParamSet, forward: Callable, spec=None):
        self.params = params
        self._forward = forward
        self.spec = spec

    def __call__(self, x) -> Tensor:
        return self._forward(x if isinstance(x, Tensor) else Tensor(x))

    forward = __call__


def kaiming_init(params: ParamSet, seed: int):
    """Weights ~ N(0, sqrt(2/fan_in)); biases zero. Layers are drawn in index order."""
    rng = np.random.default_rng(seed)
    for layer in params.layers:
        if layer.fan_in <= 0:
            raise ValidationError(f"layer {layer.index} has fan_in={layer.fan_in}")
        std = np.sqrt(2.0 / layer.fan_in)
        layer.weight.data = rng.normal(0.0, std, size=layer.weight.shape)
        if layer.bias is not None:
            layer.bias.data = np.zeros(layer.bias.shape)
        layer.weight.grad = None
        if layer.bias is not None:
            layer.bias.grad = None


@dataclass
class GradCheckReport:
    errors: dict
    tolerance: float

    @property
    def failures(self) -> list:
        return [name for name, err in self.errors.items() if not err < self.tolerance]

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> float:
    """Elementwise ``|a-n| / max(|a|, |n|, floor)``, maximized."""
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def grad_check(loss_fn: Callable[[], Tensor], named_params, tolerance: float = 1e-5,
               h: float = 1e-5, max_params: int = 10_000) -> GradCheckReport:
    """Compare backprop against central differences for every parameter tensor.

    ``loss_fn`` must rebuild the graph on each call and return a scalar.
    The relative-error denominator is floored at ``1e-5 * max(1, |loss|)``,
    the scale below which central-difference roundoff dominates.
    """
    named_params = list(named_params)
    total = sum(t.size for _, t in named_params)
    if total >= max_params:
        raise ValidationError(f"grad_check is limited to < {max_params} parameters, got {total}")
    if not named_params:
        return GradCheckReport({}, tolerance)
    for _, t in named_params:
        t.grad = None
    loss = loss_fn()
    loss.backward()
    floor = 1e-5 * max(1.0, abs(loss.item()))
    errors = {}
    for name, t in named_params:
        t.data = np.ascontiguousarray(t.data)
        analytic = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        numeric = np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            nflat[i] = (up - down) / (2 * h)
        errors[name] = relative_error(analytic, numeric, floor)
    for _, t in named_params:
        t.grad = None
    return GradCheckReport(errors, tolerance)
