"""Search spaces: cell-DAG genomes, stage-width genomes, and their networks.

Two genome families are supported:

* ``cell``: six op codes, one per edge of a 4-node DAG cell. Node ``j`` sums
  the transformed outputs of all nodes ``i < j``; the cell returns its input
  plus node 3, so every genome (even all-``none``) yields a trainable net.
  Edges leaving a node that receives no signal are dropped along with their
  parameters.
* ``width``: one channel count per stage, each taken from a fixed ladder.

Networks are stem conv -> stages -> global average pool -> linear, with
conv->ReLU blocks and no batch normalization.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

import numpy as np

from .engine import Network, ParamSet, conv_layer, kaiming_init, linear_layer
from .engine import ops
from .errors import CapacityError, ParseError, ValidationError

OPS = ("none", "skip", "conv1x1", "conv3x3", "avgpool3x3")
OP_CODE = {name: code for code, name in enumerate(OPS)}
EDGES = ((0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3))
SCHEMA_VERSION = 1
MAX_ENUMERATION = 10**6


@dataclass(frozen=True)
class Genome:
    space: str
    genes: tuple

    def __post_init__(self):
        object.__setattr__(self, "genes", tuple(int(g) for g in self.genes))

    def digest(self) -> str:
        return hashlib.sha256(genome_serialize(self).encode()).hexdigest()[:16]

    def __str__(self):
        if self.space == "cell":
            return "|".join(OPS[g] for g in self.genes)
        return "-".join(str(g) for g in self.genes)


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "conv" | "linear"
    cin: int
    cout: int
    kernel: int = 1
    stride: int = 1
    pad: int = 0
    bias: bool = True
    in_hw: tuple = (1, 1)

    @property
    def out_hw(self) -> tuple:
        if self.kind != "conv":
            return (1, 1)
        return tuple((n + 2 * self.pad - self.kernel) // self.stride + 1 for n in self.in_hw)


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple
    classes: int
    layers: tuple


def live_nodes(genes) -> tuple:
    """Which cell nodes carry signal: node 0 always, node j if a non-none edge reaches it from a live node."""
    live = [True, False, False, False]
    for e, (src, dst) in enumerate(EDGES):
        if live[src] and OPS[genes[e]] != "none":
            live[dst] = True
    return tuple(live)


def conv_spec(cin, cout, k, in_hw, stride=1, pad=None, bias=True) -> LayerSpec:
    return LayerSpec("conv", cin, cout, k, stride, k // 2 if pad is None else pad, bias, tuple(in_hw))


def linear_spec(fan_in, fan_out, bias=True) -> LayerSpec:
    return LayerSpec("linear", fan_in, fan_out, bias=bias)


def count_params(spec: Union[NetworkSpec, LayerSpec]) -> int:
    layers = (spec,) if isinstance(spec, LayerSpec) else spec.layers
    total = 0
    for l in layers:
        total += l.cin * l.cout * l.kernel * l.kernel + (l.cout if l.bias else 0)
    return total


def count_flops(spec: Union[NetworkSpec, LayerSpec], input_shape: Optional[tuple] = None) -> int:
    """Multiply-accumulates for one input; pooling, ReLU, adds and biases excluded."""
    if isinstance(spec, NetworkSpec):
        if input_shape is not None and tuple(input_shape) != tuple(spec.input_shape):
            raise ValidationError(f"spec was built for input {spec.input_shape}, not {tuple(input_shape)}")
        layers = spec.layers
    else:
        layers = (spec,)
    total = 0
    for l in layers:
        if l.kind == "conv":
            ho, wo = l.out_hw
            total += l.kernel * l.kernel * l.cin * l.cout * ho * wo
        else:
            total += l.cin * l.cout
    return total


# ------------------------------------------------------------------ spaces

class _Space:
    tag = ""

    def alphabets(self) -> tuple:
        raise NotImplementedError

    @property
    def size(self) -> int:
        return int(np.prod([len(a) for a in self.alphabets()], dtype=object))

    def validate(self, genome: Genome):
        if genome.space != self.tag:
            raise ValidationError(f"genome belongs to space {genome.space!r}, expected {self.tag!r}")
        alphabets = self.alphabets()
        if len(genome.genes) != len(alphabets):
            raise ValidationError(f"expected {len(alphabets)} genes, got {len(genome.genes)}")
        for pos, (g, alpha) in enumerate(zip(genome.genes, alphabets)):
            if g not in alpha:
                raise ValidationError(f"gene {pos} = {g} not in {alpha}")

    def contains(self, genome: Genome) -> bool:
        try:
            self.validate(genome)
        except ValidationError:
            return False
        return True

    def random(self, rng: np.random.Generator) -> Genome:
        return Genome(self.tag, tuple(alpha[rng.integers(len(alpha))] for alpha in self.alphabets()))

    def mutate(self, genome: Genome, rng: np.random.Generator) -> Genome:
        """Resample one uniformly chosen mutable gene, excluding its current value."""
        alphabets = self.alphabets()
        mutable = [i for i, a in enumerate(alphabets) if len(a) > 1]
        if not mutable:
            raise ValidationError("space has no gene with more than one value")
        pos = mutable[rng.integers(len(mutable))]
        choices = [v for v in alphabets[pos] if v != genome.genes[pos]]
        genes = list(genome.genes)
        genes[pos] = choices[rng.integers(len(choices))]
        return Genome(self.tag, tuple(genes))

    def enumerate(self) -> Iterator[Genome]:
        if self.size > MAX_ENUMERATION:
            raise CapacityError(f"space has {self.size} genomes, limit is {MAX_ENUMERATION}")
        for genes in itertools.product(*self.alphabets()):
            yield Genome(self.tag, genes)

    def minimal(self) -> Genome:
        raise NotImplementedError

    def to_spec(self, genome: Genome, input_shape: tuple, classes: int) -> NetworkSpec:
        raise NotImplementedError

    def build(self, genome: Genome, input_shape: tuple, classes: int, seed: int) -> Network:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _check_input(input_shape, classes):
    if len(input_shape) != 3 or min(input_shape) < 1:
        raise ValidationError(f"input_shape must be (C, H, W) with positive extents, got {input_shape}")
    if classes < 2:
        raise ValidationError(f"need at least 2 classes, got {classes}")


def _check_batch(x, input_shape):
    if x.data.ndim != 4 or tuple(x.shape[1:]) != tuple(input_shape):
        raise ValidationError(f"network expects (N, {', '.join(map(str, input_shape))}) input, got {x.shape}")


@dataclass(frozen=True)
class CellSpace(_Space):
    alphabet: tuple = (0, 1, 2, 3, 4)
    stage_widths: tuple = (8, 16)
    cells_per_stage: int = 1
    tag = "cell"

    def __post_init__(self):
        alpha = tuple(sorted(set(int(a) for a in self.alphabet)))
        if not alpha or alpha[0] < 0 or alpha[-1] >= len(OPS):
            raise ValidationError(f"cell alphabet must be codes in 0..{len(OPS) - 1}, got {self.alphabet}")
        object.__setattr__(self, "alphabet", alpha)
        object.__setattr__(self, "stage_widths", tuple(int(w) for w in self.stage_widths))
        if not self.stage_widths or min(self.stage_widths) < 1 or self.cells_per_stage < 1:
            raise ValidationError("stage_widths and cells_per_stage must be positive")

    def alphabets(self):
        return (self.alphabet,) * len(EDGES)

    def minimal(self) -> Genome:
        pick = OP_CODE["skip"] if OP_CODE["skip"] in self.alphabet else self.alphabet[0]
        return Genome(self.tag, (pick,) * len(EDGES))

    def to_dict(self):
        return {"space": "cell", "alphabet": [OPS[a] for a in self.alphabet],
                "stage_widths": list(self.stage_widths), "cells_per_stage": self.cells_per_stage}

    def _layout(self, genome, input_shape):
        """Yield (role, LayerSpec) in parameter order."""
        c, h, w = input_shape
        hw = (h, w)
        out = [("stem", conv_spec(c, self.stage_widths[0], 3, hw))]
        prev = self.stage_widths[0]
        for s, width in enumerate(self.stage_widths):
            if s > 0:
                out.append((("transition", s), conv_spec(prev, width, 1, hw)))
            live = live_nodes(genome.genes)
            for cell in range(self.cells_per_stage):
                for e, code in enumerate(genome.genes):
                    if not live[EDGES[e][0]]:
                        continue
                    if OPS[code] == "conv1x1":
                        out.append((("edge", s, cell, e), conv_spec(width, width, 1, hw)))
                    elif OPS[code] == "conv3x3":
                        out.append((("edge", s, cell, e), conv_spec(width, width, 3, hw)))
            prev = width
        return out, prev

    def to_spec(self, genome, input_shape, classes) -> NetworkSpec:
        self.validate(genome)
        _check_input(input_shape, classes)
        layout, last = self._layout(genome, input_shape)
        layers = [ls for _, ls in layout] + [linear_spec(last, classes)]
        return NetworkSpec(tuple(input_shape), classes, tuple(layers))

    def build(self, genome, input_shape, classes, seed) -> Network:
        spec = self.to_spec(genome, input_shape, classes)
        layout, _ = self._layout(genome, input_shape)
        modules = {}
        layers = []
        for idx, (role, ls) in enumerate(layout, start=1):
            layer = conv_layer(idx, ls.cin, ls.cout, ls.kernel, ls.stride, ls.pad, ls.bias)
            modules[role] = layer
            layers.append(layer)
        head = linear_layer(len(layers) + 1, spec.layers[-1].cin, classes)
        layers.append(head)
        params = ParamSet(layers)
        kaiming_init(params, seed)
        genes = genome.genes
        widths = self.stage_widths
        cells = self.cells_per_stage

        def cell(x, s, c):
            nodes = [x]
            for j in range(1, 4):
                acc = None
                for e, (src, dst) in enumerate(EDGES):
                    if dst != j or OPS[genes[e]] == "none" or nodes[src] is None:
                        continue
                    inp = nodes[src]
                    op = OPS[genes[e]]
                    if op == "skip":
                        v = inp
                    elif op == "avgpool3x3":
                        v = ops.avg_pool2d(inp, 3, stride=1, pad=1)
                    else:
                        v = ops.relu(modules[("edge", s, c, e)](inp))
                    acc = v if acc is None else ops.add(acc, v)
                nodes.append(acc)
            return x if nodes[3] is None else ops.add(x, nodes[3])

        def forward(x):
            _check_batch(x, input_shape)
            h = ops.relu(modules["stem"](x))
            for s in range(len(widths)):
                if s > 0:
                    h = ops.relu(modules[("transition", s)](h))
                for c in range(cells):
                    h = cell(h, s, c)
            return head(ops.global_avg_pool(h))

        return Network(params, forward, spec)


@dataclass(frozen=True)
class WidthSpace(_Space):
    ladder: tuple = (8, 16, 24, 32, 40, 48, 56, 64)
    stages: int = 3
    tag = "width"

    def __post_init__(self):
        ladder = tuple(sorted(set(int(w) for w in self.ladder)))
        if not ladder or ladder[0] < 1 or self.stages < 1:
            raise ValidationError("width ladder must hold positive widths and stages >= 1")
        object.__setattr__(self, "ladder", ladder)

    def alphabets(self):
        return (self.ladder,) * self.stages

    def minimal(self) -> Genome:
        return Genome(self.tag, (self.ladder[0],) * self.stages)

    def to_dict(self):
        return {"space": "width", "ladder": list(self.ladder), "stages": self.stages}

    def _layout(self, genome, input_shape):
        c, h, w = input_shape
        hw = (h, w)
        out = [conv_spec(c, genome.genes[0], 3, hw)]
        prev = genome.genes[0]
        for width in genome.genes:
            out.append(conv_spec(prev, width, 3, hw))
            prev = width
        return out, prev

    def to_spec(self, genome, input_shape, classes) -> NetworkSpec:
        self.validate(genome)
        _check_input(input_shape, classes)
        layout, last = self._layout(genome, input_shape)
        return NetworkSpec(tuple(input_shape), classes, tuple(layout) + (linear_spec(last, classes),))

    def build(self, genome, input_shape, classes, seed) -> Network:
        spec = self.to_spec(genome, input_shape, classes)
        layout, last = self._layout(genome, input_shape)
        convs = [conv_layer(i, ls.cin, ls.cout, ls.kernel, ls.stride, ls.pad) for i, ls in enumerate(layout, 1)]
        head = linear_layer(len(convs) + 1, last, classes)
        params = ParamSet(convs + [head])
        kaiming_init(params, seed)

        def forward(x):
            _check_batch(x, input_shape)
            h = x
            for conv in convs:
                h = ops.relu(conv(h))
            return head(ops.global_avg_pool(h))

        return Network(params, forward, spec)


def space_from_dict(cfg: dict) -> _Space:
    cfg = dict(cfg)
    kind = cfg.pop("space", None)
    if kind == "cell":
        alphabet = cfg.pop("alphabet", OPS)
        codes = tuple(OP_CODE[a] if isinstance(a, str) else int(a) for a in alphabet)
        return CellSpace(alphabet=codes, **cfg)
    if kind == "width":
        return WidthSpace(**cfg)
    raise ValidationError(f"unknown space {kind!r}")


PRESETS = {
    "cell": CellSpace(),
    "cell-desk64": CellSpace(alphabet=(OP_CODE["none"], OP_CODE["conv3x3"])),
    "width": WidthSpace(),
}


def get_space(name_or_cfg) -> _Space:
    if isinstance(name_or_cfg, _Space):
        return name_or_cfg
    if isinstance(name_or_cfg, dict):
        return space_from_dict(name_or_cfg)
    try:
        return PRESETS[name_or_cfg]
    except KeyError:
        raise ValidationError(f"unknown space preset {name_or_cfg!r}; known: {sorted(PRESETS)}") from None


def default_space(tag: str) -> _Space:
    return PRESETS[{"cell": "cell", "width": "width"}[tag]]


# ------------------------------------------------------- module-level API

def genome_random(space, seed: int) -> Genome:
    return get_space(space).random(np.random.default_rng(seed))


def genome_mutate(genome: Genome, seed: int, space=None) -> Genome:
    space = default_space(genome.space) if space is None else get_space(space)
    return space.mutate(genome, np.random.default_rng(seed))


def genome_to_network(genome: Genome, input_shape, classes: int, seed: int, space=None) -> Network:
    space = default_space(genome.space) if space is None else get_space(space)
    return space.build(genome, tuple(input_shape), classes, seed)


def enumerate_space(space) -> list:
    return list(get_space(space).enumerate())


def genome_serialize(genome: Genome) -> str:
    return json.dumps({"version": SCHEMA_VERSION, "space": genome.space, "genes": list(genome.genes)},
                      sort_keys=True)


def genome_parse(text: str, space=None) -> Genome:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", f"char {exc.pos}") from None
    if not isinstance(doc, dict):
        raise ParseError("genome document must be a JSON object")
    if "space" not in doc:
        raise ParseError("missing field 'space'")
    if "genes" not in doc:
        raise ParseError("missing field 'genes'")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ParseError(f"unsupported schema version {version!r}", "version")
    tag = doc["space"]
    if tag not in ("cell", "width"):
        raise ParseError(f"unknown space tag {tag!r}", "space")
    sp = default_space(tag) if space is None else get_space(space)
    if sp.tag != tag:
        raise ParseError(f"genome space {tag!r} does not match configured space {sp.tag!r}", "space")
    genes = doc["genes"]
    if not isinstance(genes, list):
        raise ParseError("'genes' must be a list", "genes")
    alphabets = sp.alphabets()
    if len(genes) != len(alphabets):
        raise ParseError(f"expected {len(alphabets)} genes, got {len(genes)}", "genes")
    for pos, (g, alpha) in enumerate(zip(genes, alphabets)):
        if isinstance(g, bool) or not isinstance(g, int) or g not in alpha:
            raise ParseError(f"gene value {g!r} not in alphabet {list(alpha)}", f"genes[{pos}]")
    return Genome(tag, tuple(genes))
