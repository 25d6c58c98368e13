"""Scoring genomes with any proxy under a fixed batch set and seed scheme.

The init seed of a candidate is ``derive_seed(seed, "init", genome JSON)``,
so a genome's score does not depend on when or where it is evaluated.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from . import proxies as px
from .datasets import Batch
from .errors import ValidationError
from .seeding import derive_seed
from .space import Genome, count_flops, count_params, genome_serialize, get_space


@dataclass
class Scorer:
    space: object
    batches: Sequence[Batch]
    input_shape: tuple
    classes: int
    seed: int = 0
    loss_kind: str = "cross_entropy"

    def __post_init__(self):
        self.space = get_space(self.space)
        self.batches = list(self.batches)
        self.input_shape = tuple(self.input_shape)

    def init_seed(self, genome: Genome) -> int:
        return derive_seed(self.seed, "init", genome_serialize(genome))

    def network(self, genome: Genome):
        return self.space.build(genome, self.input_shape, self.classes, self.init_seed(genome))

    def spec(self, genome: Genome):
        return self.space.to_spec(genome, self.input_shape, self.classes)

    def scores(self, genome: Genome, names: Sequence[str] = px.PROXIES) -> dict:
        names = list(names)
        unknown = set(names) - set(px.PROXIES)
        if unknown:
            raise ValidationError(f"unknown proxies {sorted(unknown)}")
        out = {}
        zico_family = [n for n in names if n.startswith("zico")]
        if zico_family:
            stats = px.collect_grad_stats(self.network(genome), self.batches, self.loss_kind)
            for n in zico_family:
                out[n] = getattr(px, n)(stats)
        if "grad_norm" in names:
            out["grad_norm"] = px.grad_norm(self.network(genome), self.batches[0], self.loss_kind)
        if "snip" in names:
            out["snip"] = px.snip(self.network(genome), self.batches[0], self.loss_kind)
        if "synflow" in names:
            out["synflow"] = px.synflow(self.network(genome), self.input_shape)
        if "params" in names:
            out["params"] = float(count_params(self.spec(genome)))
        if "flops" in names:
            out["flops"] = float(count_flops(self.spec(genome)))
        return {n: out[n] for n in names}

    def score(self, genome: Genome, name: str) -> float:
        return self.scores(genome, [name])[name]

    def proxy_score(self, genome: Genome, name: str) -> px.ProxyScore:
        return px.ProxyScore(name, self.score(genome, name), genome.digest(), self.init_seed(genome))
