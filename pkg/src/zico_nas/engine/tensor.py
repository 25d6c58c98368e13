"""Tensor and define-by-run graph for reverse-mode differentiation."""

from __future__ import annotations

import contextlib
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import UsageError, ValidationError


_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Evaluate ops without recording a graph (thread-local)."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


@dataclass
class Node:
    op: str
    inputs: tuple
    output: "Tensor"
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class Graph:
    """Append-only op log. Append order is a valid topological order."""

    nodes: list = field(default_factory=list)
    last_visits: int = 0

    def record(self, op, inputs, output, backward) -> int:
        self.nodes.append(Node(op, tuple(inputs), output, backward))
        return len(self.nodes) - 1

    def __len__(self):
        return len(self.nodes)


class Tensor:
    """Dense float64 array with an optional gradient buffer.

    Leaves (parameters, inputs) have ``node_id is None``; results of ops that
    touch a ``requires_grad`` tensor are recorded in a :class:`Graph`.
    """

    __slots__ = ("data", "grad", "requires_grad", "graph", "node_id", "name")

    def __init__(self, data, requires_grad: bool = False, name: str = ""):
        arr = np.array(data, dtype=np.float64)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.graph: Optional[Graph] = None
        self.node_id: Optional[int] = None
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def values(self) -> np.ndarray:
        return self.data.reshape(-1)

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self.node_id is None

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise UsageError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def backward(self):
        backward(self)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar; definitions live in ops.py
    def __add__(self, other):
        from .ops import add
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, c):
        from .ops import scale
        return scale(self, c)

    __rmul__ = __mul__

    def __matmul__(self, other):
        from .ops import matmul
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(op: str, data: np.ndarray, inputs, backward_fn) -> Tensor:
    """Wrap ``data`` as the output of ``op`` and record it if any input needs grad."""
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = ""
    out.graph = None
    out.node_id = None
    out.requires_grad = grad_enabled() and any(t.requires_grad for t in inputs)
    if not out.requires_grad:
        return out
    graph = None
    for t in inputs:
        if t.graph is not None:
            if graph is None:
                graph = t.graph
            elif t.graph is not graph:
                raise UsageError("inputs belong to different computation graphs")
    if graph is None:
        graph = Graph()
    out.graph = graph
    out.node_id = graph.record(op, inputs, out, backward_fn)
    return out


def backward(loss: Tensor) -> int:
    """Populate ``.grad`` of every leaf reachable from ``loss``.

    Leaf gradients accumulate across calls until :meth:`Tensor.zero_grad`;
    intermediate gradients are recomputed on each call. Returns the number of
    node visits, which equals the number of recorded nodes up to ``loss``.
    """
    if loss.data.size != 1:
        raise UsageError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if loss.graph is None:
        if loss.requires_grad and loss.is_leaf:
            g = np.ones_like(loss.data)
            loss.grad = g if loss.grad is None else loss.grad + g
            return 0
        raise UsageError("loss does not belong to a live graph")

    graph = loss.graph
    pending = {loss.node_id: np.ones_like(loss.data)}
    visits = 0
    for nid in range(loss.node_id, -1, -1):
        node = graph.nodes[nid]
        visits += 1
        g = pending.pop(nid, None)
        if g is None:
            continue
        node.output.grad = g
        grads = node.backward(g)
        for inp, gi in zip(node.inputs, grads):
            if gi is None or not inp.requires_grad:
                continue
            if inp.node_id is None:
                inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
            elif inp.node_id in pending:
                pending[inp.node_id] = pending[inp.node_id] + gi
            else:
                pending[inp.node_id] = gi
    graph.last_visits = visits
    return visits


def check_finite(t: Tensor, what: str = "tensor"):
    if not np.all(np.isfinite(t.data)):
        raise ValidationError(f"{what} contains non-finite values")
