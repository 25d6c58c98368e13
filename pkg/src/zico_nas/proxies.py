"""Training-free proxies: ZiCo and its ablations, plus baseline saliency scores."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .datasets import Batch
from .engine import Network, Tensor, backward, cross_entropy, mse_loss, tensor_sum
from .errors import NumericError, ValidationError

EPS_STD = 1e-8
EPS_LOG = 1e-12

PROXIES = ("zico", "zico_mean_only", "zico_std_only", "grad_norm", "snip", "synflow", "params", "flops")


@dataclass
class ParamStats:
    name: str
    layer_index: int
    mean_abs: np.ndarray
    std_abs: np.ndarray


@dataclass
class GradStats:
    """Per-parameter mean and population std of |gradient| across N batches."""

    params: list
    N: int

    def layers(self) -> dict:
        out: dict = {}
        for p in self.params:
            out.setdefault(p.layer_index, []).append(p)
        return dict(sorted(out.items()))

    @classmethod
    def from_samples(cls, samples: dict) -> "GradStats":
        """Build from raw gradients: ``{(name, layer_index): [grad_batch_1, ..., grad_batch_N]}``."""
        params = []
        n = None
        for (name, layer), grads in samples.items():
            a = np.abs(np.stack([np.asarray(g, dtype=np.float64) for g in grads]))
            if n is None:
                n = a.shape[0]
            elif a.shape[0] != n:
                raise ValidationError("every parameter needs the same number of batch gradients")
            params.append(ParamStats(name, layer, a.mean(axis=0), a.std(axis=0)))
        if n is None or n < 2:
            raise ValidationError(f"need gradients from N >= 2 batches, got {n}")
        return cls(params, n)


@dataclass(frozen=True)
class ProxyScore:
    proxy_name: str
    value: float
    genome_ref: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.proxy_name not in PROXIES:
            raise ValidationError(f"unknown proxy {self.proxy_name!r}")


LossFn = Union[str, Callable[[Tensor, np.ndarray], Tensor]]


def task_loss(logits: Tensor, labels: np.ndarray, loss_kind: LossFn = "cross_entropy") -> Tensor:
    if callable(loss_kind):
        return loss_kind(logits, labels)
    if loss_kind == "cross_entropy":
        return cross_entropy(logits, labels)
    if loss_kind == "mse":
        target = np.zeros(logits.shape)
        target[np.arange(len(labels)), labels] = 1.0
        return mse_loss(logits, Tensor(target))
    raise ValidationError(f"unknown loss kind {loss_kind!r}")


def _loss_and_grads(network: Network, batch: Batch, loss_kind: LossFn, what: str) -> float:
    network.params.zero_grad()
    loss = task_loss(network(batch.inputs), batch.labels, loss_kind)
    value = loss.item()
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss on {what} {batch.index}")
    backward(loss)
    return value


def _grads(network: Network) -> list:
    return [np.zeros_like(t.data) if t.grad is None else t.grad for t in network.params.tensors()]


def collect_grad_stats(network: Network, batches: Sequence[Batch], loss_kind: LossFn = "cross_entropy") -> GradStats:
    """One forward/backward per batch at the current (initial) parameters, never updating them."""
    batches = list(batches)
    if len(batches) < 2:
        raise ValidationError(f"need N >= 2 batches, got {len(batches)}")
    named = [(name, layer.index, t) for layer in network.params.layers for name, t in layer.tensors()]
    records = [[] for _ in named]
    for batch in batches:
        _loss_and_grads(network, batch, loss_kind, "batch")
        for rec, (_, _, t) in zip(records, named):
            rec.append(np.abs(t.grad) if t.grad is not None else np.zeros_like(t.data))
    network.params.zero_grad()
    params = []
    for rec, (name, layer, _) in zip(records, named):
        a = np.stack(rec)
        params.append(ParamStats(name, layer, a.mean(axis=0), a.std(axis=0)))
    return GradStats(params, len(batches))


def _layerwise_log_sum(stats: GradStats, ratio: Callable[[ParamStats], np.ndarray]) -> float:
    total = 0.0
    for _, plist in stats.layers().items():
        inner = sum(float(ratio(p).sum()) for p in plist)
        total += np.log(max(inner, EPS_LOG))
    return float(total)


def zico(stats: GradStats) -> float:
    """Sum over layers of log(sum over weights of mean|g| / std|g|), with clamps."""
    return _layerwise_log_sum(stats, lambda p: p.mean_abs / np.maximum(p.std_abs, EPS_STD))


def zico_mean_only(stats: GradStats) -> float:
    return _layerwise_log_sum(stats, lambda p: p.mean_abs)


def zico_std_only(stats: GradStats) -> float:
    return _layerwise_log_sum(stats, lambda p: 1.0 / np.maximum(p.std_abs, EPS_STD))


def grad_norm(network: Network, batch: Batch, loss_kind: LossFn = "cross_entropy") -> float:
    _loss_and_grads(network, batch, loss_kind, "batch")
    sq = sum(float(np.dot(g.ravel(), g.ravel())) for g in _grads(network))
    network.params.zero_grad()
    return float(np.sqrt(sq))


def snip(network: Network, batch: Batch, loss_kind: LossFn = "cross_entropy") -> float:
    """Sum of |parameter * gradient|."""
    _loss_and_grads(network, batch, loss_kind, "batch")
    score = sum(float(np.abs(t.data * g).sum()) for t, g in zip(network.params.tensors(), _grads(network)))
    network.params.zero_grad()
    return score


def synflow(network: Network, input_shape: tuple) -> float:
    """Data-free: with |params|, push an all-ones input and sum grad(R) * |param|."""
    tensors = network.params.tensors()
    saved = [t.data for t in tensors]
    try:
        for t in tensors:
            t.data = np.abs(t.data)
        network.params.zero_grad()
        out = network(np.ones((1,) + tuple(input_shape)))
        backward(tensor_sum(out))
        score = sum(float((t.data * g).sum()) for t, g in zip(tensors, _grads(network)))
    finally:
        for t, d in zip(tensors, saved):
            t.data = d
        network.params.zero_grad()
    return score
