"""Proxy-vs-accuracy benchmark and the batch-count / batch-size ablations."""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .. import proxies as px
from ..datasets import Dataset, batch_iter
from ..errors import ValidationError
from ..scoring import Scorer
from ..seeding import derive_seed, rng_for
from ..space import Genome, get_space, genome_serialize
from .correlation import kendall_tau, spearman_rho
from .training import DESK_TRAIN, TrainConfig, train_candidate

DEFAULT_N = 2


@dataclass
class BenchmarkRecord:
    genome: Genome
    scores: dict
    accuracy: float
    diverged: bool = False
    train_seconds: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValidationError(f"accuracy {self.accuracy} outside [0, 1]")
        bad = [k for k, v in self.scores.items() if not math.isfinite(v)]
        if bad:
            raise ValidationError(f"non-finite proxy values for {bad} on {self.genome}")

    def csv_row(self) -> dict:
        row = {"genome": self.genome, "accuracy": self.accuracy, "seed": self.seed}
        for name in px.PROXIES:
            row[name] = self.scores.get(name, float("nan"))
        return row


@dataclass
class CorrelationReport:
    rows: dict  # proxy -> {"kendall_tau", "spearman_rho", "n"}
    dataset_tag: str
    config_digest: str

    def tau(self, proxy: str) -> float:
        return self.rows[proxy]["kendall_tau"]

    def to_dict(self) -> dict:
        return {"dataset": self.dataset_tag, "config_digest": self.config_digest, "proxies": self.rows}


def correlate(records: Sequence[BenchmarkRecord], proxies: Sequence[str], dataset_tag: str = "",
              config_digest: str = "") -> CorrelationReport:
    acc = [r.accuracy for r in records]
    rows = {}
    for name in proxies:
        vals = [r.scores[name] for r in records]
        rows[name] = {"kendall_tau": kendall_tau(vals, acc), "spearman_rho": spearman_rho(vals, acc),
                      "n": len(records)}
    return CorrelationReport(rows, dataset_tag, config_digest)


def digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass
class BenchmarkContext:
    """Everything needed to score and train the same genomes again."""

    space: object
    train: Dataset
    test: Dataset
    train_config: TrainConfig
    seed: int = 0
    n_batches: int = DEFAULT_N
    batch_size: int = 64
    loss_kind: str = "cross_entropy"
    dataset_tag: str = "synthetic"
    genomes: list = field(default_factory=list)

    def __post_init__(self):
        self.space = get_space(self.space)
        if self.train.image_shape is None:
            raise ValidationError("benchmark data needs an image_shape")

    @property
    def classes(self) -> int:
        return self.train.num_classes or int(self.train.labels.max()) + 1

    def batches(self, n: int, size: int) -> list:
        """The first ``n`` batches of one seeded pass; every batch is full."""
        if n < 1 or size < 1:
            raise ValidationError(f"need n >= 1 batches of size >= 1, got n={n}, size={size}")
        if n * size > self.train.M:
            raise ValidationError(f"{n} batches of {size} need {n * size} samples, have {self.train.M}")
        it = batch_iter(self.train, size, derive_seed(self.seed, "proxy-batches", size), as_images=True)
        return [next(it) for _ in range(n)]

    def scorer(self, n: Optional[int] = None, size: Optional[int] = None, batches=None) -> Scorer:
        if batches is None:
            batches = self.batches(n or self.n_batches, size or self.batch_size)
        return Scorer(self.space, batches, self.train.image_shape, self.classes, self.seed, self.loss_kind)

    def config_digest(self) -> str:
        return digest({"space": self.space.to_dict(), "train": self.train_config.to_dict(),
                       "seed": self.seed, "n_batches": self.n_batches, "batch_size": self.batch_size,
                       "data": hashlib.sha256(self.train.samples.tobytes()).hexdigest()[:16],
                       "tag": self.dataset_tag})


def desk_context(data: str = None, space="cell-desk64", seed: int = 0, train_config: TrainConfig = None,
                 n_batches: int = DEFAULT_N, batch_size: int = 128) -> BenchmarkContext:
    """The default desk-scale setup: noisy 8x8 gratings, 10 classes."""
    from ..datasets import DEFAULT_DATA, load_data_spec

    data = data or DEFAULT_DATA
    train, test = load_data_spec(data)
    return BenchmarkContext(space, train, test, train_config or DESK_TRAIN, seed, n_batches, batch_size,
                            dataset_tag=data)


def _evaluate(args) -> BenchmarkRecord:
    ctx, genome, proxies = args
    scores = ctx.scorer().scores(genome, proxies)
    init_seed = derive_seed(ctx.train_config.seed, "train-init", genome_serialize(genome))
    res = train_candidate(genome, ctx.train, ctx.test, ctx.train_config, space=ctx.space, init_seed=init_seed)
    return BenchmarkRecord(genome, scores, res.accuracy, res.diverged, res.seconds, ctx.seed)


def _map(fn, items, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))  # map keeps input order


def select_genomes(space, sample_size: Optional[int], seed: int) -> list:
    space = get_space(space)
    allg = list(space.enumerate())
    if sample_size is None:
        return allg
    if not 2 <= sample_size <= len(allg):
        raise ValidationError(f"sample size must lie in [2, {len(allg)}], got {sample_size}")
    pick = np.sort(rng_for(seed, "benchmark-sample").choice(len(allg), size=sample_size, replace=False))
    return [allg[i] for i in pick]


def run_benchmark(ctx: BenchmarkContext, proxies: Sequence[str] = px.PROXIES,
                  sample_size: Optional[int] = None, jobs: int = 1) -> tuple:
    """Score every selected genome at init, train it, correlate. Returns (report, records)."""
    proxies = list(proxies)
    ctx.genomes = select_genomes(ctx.space, sample_size, ctx.seed)
    records = _map(_evaluate, [(ctx, g, proxies) for g in ctx.genomes], jobs)
    report = correlate(records, proxies, ctx.dataset_tag, ctx.config_digest())
    return report, records


def _zico_tau(ctx: BenchmarkContext, records, scorer: Scorer) -> dict:
    z = [scorer.score(r.genome, "zico") for r in records]
    acc = [r.accuracy for r in records]
    return {"kendall_tau": kendall_tau(z, acc), "spearman_rho": spearman_rho(z, acc), "n": len(records)}


def run_ablation_batches(ctx: BenchmarkContext, records, Ns: Sequence[int] = range(2, 11),
                         batch_provider: Optional[Callable[[int], list]] = None) -> list:
    """ZiCo correlation with accuracy as the number of batches N varies."""
    Ns = list(Ns)
    if any(n < 2 for n in Ns):
        raise ValidationError(f"every N must be >= 2, got {Ns}")
    rows = []
    for n in Ns:
        batches = batch_provider(n) if batch_provider else ctx.batches(n, ctx.batch_size)
        row = {"N": n, "default": n == DEFAULT_N}
        row.update(_zico_tau(ctx, records, ctx.scorer(batches=batches)))
        rows.append(row)
    return rows


def run_ablation_batchsize(ctx: BenchmarkContext, records,
                           sizes: Sequence[int] = (1, 2, 4, 8, 16, 32, 64, 128)) -> list:
    """ZiCo correlation with accuracy as the batch size varies, at N = 2."""
    sizes = list(sizes)
    if any(s < 1 for s in sizes):
        raise ValidationError(f"every batch size must be >= 1, got {sizes}")
    rows = []
    for size in sizes:
        row = {"batch_size": size, "default": size == ctx.batch_size}
        row.update(_zico_tau(ctx, records, ctx.scorer(DEFAULT_N, size)))
        rows.append(row)
    return rows
