"""Budget-constrained evolutionary search over a genome space.

The loop: sample a parent uniformly from the population, mutate one gene,
and if the child fits the FLOPs budget, score it and add it; when the
population exceeds ``E``, drop the lowest score (oldest first among ties).
The answer is the highest-scoring member.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InfeasibleError, ValidationError
from .seeding import rng_for
from .space import Genome, count_flops, get_space, genome_serialize

ScoreFn = Callable[[Genome], float]


@dataclass(frozen=True)
class SearchConfig:
    T: int = 200
    B: float = float("inf")
    E: int = 8
    seed: int = 0
    space: str = "cell-desk64"
    proxy: str = "zico"
    n_batches: int = 2
    batch_size: int = 64
    input_shape: tuple = (1, 8, 8)
    classes: int = 10

    def __post_init__(self):
        if self.T < 0:
            raise ValidationError(f"T must be >= 0, got {self.T}")
        if self.E < 1:
            raise ValidationError(f"E must be >= 1, got {self.E}")
        if not self.B > 0:
            raise ValidationError(f"budget B must be > 0, got {self.B}")
        object.__setattr__(self, "input_shape", tuple(self.input_shape))

    def flops(self, genome: Genome) -> int:
        return count_flops(get_space(self.space).to_spec(genome, self.input_shape, self.classes))


@dataclass
class Entry:
    genome: Genome
    score: float
    step: int


@dataclass
class Population:
    cap: int
    entries: list = field(default_factory=list)

    def add(self, genome: Genome, score: float, step: int) -> Optional[Entry]:
        """Insert, then evict the lowest score (oldest on ties) if over the cap."""
        self.entries.append(Entry(genome, score, step))
        if len(self.entries) <= self.cap:
            return None
        worst = min(range(len(self.entries)), key=lambda i: (self.entries[i].score, self.entries[i].step))
        return self.entries.pop(worst)

    def sample(self, rng: np.random.Generator) -> Entry:
        return self.entries[int(rng.integers(len(self.entries)))]

    def best(self) -> Entry:
        return max(self.entries, key=lambda e: (e.score, _neg_genes(e.genome)))

    def __len__(self):
        return len(self.entries)


def _neg_genes(g: Genome) -> tuple:
    # max() over this picks the lexicographically smallest gene vector
    return tuple(-x for x in g.genes)


@dataclass
class StepRecord:
    step: int
    parent: list
    candidate: list
    flops: int
    score: Optional[float]
    action: str  # "init", "accepted", "rejected_budget"
    removed: Optional[list]
    best_score: float
    population: int


@dataclass
class SearchLog:
    records: list = field(default_factory=list)
    best: Optional[Genome] = None
    best_score: float = float("nan")

    def to_jsonl(self) -> str:
        lines = [json.dumps(asdict(r), sort_keys=True) for r in self.records]
        lines.append(json.dumps({"final": json.loads(genome_serialize(self.best)),
                                 "score": self.best_score}, sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        try:
            with open(path, "w") as fh:
                fh.write(self.to_jsonl())
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def evolve(config: SearchConfig, score_fn: ScoreFn, F0: Optional[Genome] = None) -> tuple:
    """Run the search loop for ``config.T`` steps. Returns (best genome, log)."""
    space = get_space(config.space)
    if space.size == 0:
        raise ValidationError("search space is empty")
    F0 = space.minimal() if F0 is None else F0
    space.validate(F0)
    f0_flops = config.flops(F0)
    if f0_flops > config.B:
        raise ValidationError(f"initial genome needs {f0_flops} MACs, over the budget {config.B}")

    rng = rng_for(config.seed, "evolve")
    pop = Population(config.E)
    s0 = float(score_fn(F0))
    pop.add(F0, s0, 0)
    log = SearchLog()
    best = s0
    log.records.append(StepRecord(0, list(F0.genes), list(F0.genes), f0_flops, s0, "init", None, best, 1))
    for step in range(1, config.T + 1):
        parent = pop.sample(rng)
        child = space.mutate(parent.genome, rng)
        flops = config.flops(child)
        if flops > config.B:
            log.records.append(StepRecord(step, list(parent.genome.genes), list(child.genes), flops,
                                          None, "rejected_budget", None, best, len(pop)))
            continue
        score = float(score_fn(child))
        removed = pop.add(child, score, step)
        best = max(e.score for e in pop.entries) if removed is not None else max(best, score)
        log.records.append(StepRecord(step, list(parent.genome.genes), list(child.genes), flops, score,
                                      "accepted", None if removed is None else list(removed.genome.genes),
                                      best, len(pop)))
    top = pop.best()
    log.best, log.best_score = top.genome, top.score
    return top.genome, log


def brute_force_best(space, budget: float, score_fn: ScoreFn, input_shape=(1, 8, 8), classes: int = 10,
                     limit: int = 100_000) -> Genome:
    """Highest score among genomes within budget; ties go to the smallest gene vector."""
    space = get_space(space)
    if space.size > limit:
        raise ValidationError(f"space has {space.size} genomes, over the brute-force limit {limit}")
    best_key, best = None, None
    for g in space.enumerate():
        if count_flops(space.to_spec(g, input_shape, classes)) > budget:
            continue
        key = (float(score_fn(g)), _neg_genes(g))
        if best_key is None or key > best_key:
            best_key, best = key, g
    if best is None:
        raise InfeasibleError(f"no genome meets the budget {budget}")
    return best


class CachedScore:
    """Memoizes a score function by genome; scores are pure per genome."""

    def __init__(self, fn: ScoreFn):
        self.fn = fn
        self.cache: dict = {}

    def __call__(self, genome: Genome) -> float:
        key = (genome.space, tuple(genome.genes))
        if key not in self.cache:
            self.cache[key] = float(self.fn(genome))
        return self.cache[key]
