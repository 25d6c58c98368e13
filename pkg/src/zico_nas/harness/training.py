"""Ground-truth training of candidate networks (SGD with momentum)."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from ..datasets import Dataset, batch_iter
from ..engine import backward, cross_entropy, no_grad
from ..errors import ValidationError
from ..seeding import derive_seed
from ..space import Genome, get_space


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 3
    batch_size: int = 64
    lr: float = 0.05
    schedule: str = "cosine"  # or "constant"
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    clip_norm: float = 0.0  # global gradient-norm clip; 0 disables
    warmup_epochs: float = 0.0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if not self.lr > 0:
            raise ValidationError(f"lr must be > 0, got {self.lr}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.schedule not in ("cosine", "constant"):
            raise ValidationError(f"unknown schedule {self.schedule!r}")

    def to_dict(self):
        return asdict(self)


# The desk benchmark budget: 3 epochs, lr 0.05 cosine, momentum 0.9. Without
# normalization layers the first large steps kill ReLUs in deeper candidates,
# so the global gradient norm is clipped at 1.
DESK_TRAIN = TrainConfig(epochs=3, batch_size=32, lr=0.05, clip_norm=1.0)


def parse_train_config(text: str, base: TrainConfig = DESK_TRAIN) -> TrainConfig:
    """``key=value,...`` overrides on top of ``base``."""
    fields = {k: type(v) for k, v in base.to_dict().items()}
    values = base.to_dict()
    for item in filter(None, text.split(",")):
        key, eq, value = item.partition("=")
        if not eq or key not in fields:
            raise ValidationError(f"bad train option {item!r}; known: {sorted(fields)}")
        try:
            values[key] = fields[key](value)
        except ValueError:
            raise ValidationError(f"train option {key} needs a {fields[key].__name__}, got {value!r}") from None
    return TrainConfig(**values)


@dataclass
class TrainResult:
    accuracy: float
    diverged: bool
    final_loss: float
    seconds: float


def evaluate(network, ds: Dataset, batch_size: int = 256) -> float:
    correct = 0
    with no_grad():
        for start in range(0, ds.M, batch_size):
            idx = np.arange(start, min(start + batch_size, ds.M))
            logits = network(ds.images(idx)).data
            correct += int((logits.argmax(axis=1) == ds.labels[idx]).sum())
    return correct / ds.M


def learning_rate(config: TrainConfig, step: int, total: int, steps_per_epoch: int) -> float:
    warm = int(round(config.warmup_epochs * steps_per_epoch))
    if step < warm:
        return config.lr * (step + 1) / warm
    if config.schedule == "constant":
        return config.lr
    return 0.5 * config.lr * (1 + math.cos(math.pi * (step - warm) / max(total - warm, 1)))


def train_network(network, train: Dataset, config: TrainConfig, seed: int) -> tuple:
    """Train in place. Returns (diverged, last finite loss)."""
    tensors = network.params.tensors()
    velocity = [np.zeros_like(t.data) for t in tensors]
    steps_per_epoch = math.ceil(train.M / config.batch_size)
    total = config.epochs * steps_per_epoch
    step = 0
    last = float("nan")
    for epoch in range(config.epochs):
        for batch in batch_iter(train, config.batch_size, derive_seed(seed, "epoch", epoch), as_images=True):
            lr = learning_rate(config, step, total, steps_per_epoch)
            network.params.zero_grad()
            loss = cross_entropy(network(batch.inputs), batch.labels)
            value = loss.item()
            if not np.isfinite(value):
                return True, last
            backward(loss)
            grads = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]
            if config.clip_norm > 0:
                norm = math.sqrt(sum(float(np.vdot(g, g)) for g in grads))
                if norm > config.clip_norm:
                    grads = [g * (config.clip_norm / norm) for g in grads]
            for t, v, g in zip(tensors, velocity, grads):
                v *= config.momentum
                v += g + config.weight_decay * t.data
                t.data = t.data - lr * v
            last = value
            step += 1
    network.params.zero_grad()
    bad = any(not np.all(np.isfinite(t.data)) for t in tensors)
    return bad, last


def train_candidate(genome: Genome, train: Dataset, test: Dataset, config: TrainConfig,
                    space=None, init_seed: int = None) -> TrainResult:
    """Train from a Kaiming init and report held-out accuracy; divergence scores 0."""
    space = get_space(space if space is not None else genome.space)
    if train.image_shape is None:
        raise ValidationError("training data needs an image_shape")
    classes = train.num_classes or int(train.labels.max()) + 1
    if init_seed is None:
        init_seed = derive_seed(config.seed, "train-init", str(genome))
    t0 = time.perf_counter()
    network = space.build(genome, train.image_shape, classes, init_seed)
    diverged, last = train_network(network, train, config, derive_seed(config.seed, "order", str(genome)))
    acc = 0.0 if diverged else evaluate(network, test)
    return TrainResult(acc, diverged, last, time.perf_counter() - t0)
