"""Spiking network graph model, validation, fanin statistics and generators."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

INPUT, HIDDEN, OUTPUT = "input", "hidden", "output"
KINDS = (INPUT, HIDDEN, OUTPUT)

DEFAULT_THRESHOLD = 0.0
DEFAULT_GAIN = 1.0
DEFAULT_RMAX = 1000.0


class FitmapError(Exception):
    """Base class for errors raised by this package."""


class NetworkValidationError(FitmapError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        more = len(self.violations) - 5
        if more > 0:
            lines += f"; ... {more} more"
        super().__init__(f"invalid network: {lines}")


@dataclass(frozen=True)
class Neuron:
    id: int
    kind: str = HIDDEN
    threshold: float = DEFAULT_THRESHOLD
    gain: float = DEFAULT_GAIN
    r_max: float = DEFAULT_RMAX


class Synapse(NamedTuple):
    src: int
    dst: int
    weight: float


class Violation(NamedTuple):
    code: str
    ref: tuple
    detail: str = ""

    def __str__(self):
        s = f"{self.code} {self.ref}"
        return f"{s}: {self.detail}" if self.detail else s


@dataclass(frozen=True, eq=False)
class Network:
    """Directed weighted graph of rate neurons.

    Synapses are held column-wise in three parallel arrays (``src``, ``dst``,
    ``weight``) so multi-million synapse layers stay cheap.
    """

    neurons: tuple[Neuron, ...]
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "neurons", tuple(self.neurons))
        object.__setattr__(self, "src", np.asarray(self.src, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "dst", np.asarray(self.dst, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "weight", np.asarray(self.weight, dtype=np.float64).reshape(-1))
        object.__setattr__(self, "metadata", {str(k): str(v) for k, v in dict(self.metadata).items()})
        if not (len(self.src) == len(self.dst) == len(self.weight)):
            raise ValueError("src, dst and weight must have equal length")

    @classmethod
    def from_synapses(cls, neurons: Iterable[Neuron], synapses: Iterable[Sequence], metadata=None) -> "Network":
        syn = list(synapses)
        if syn:
            src, dst, w = zip(*syn)
        else:
            src, dst, w = (), (), ()
        return cls(tuple(neurons), np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
                   np.array(w, dtype=np.float64), metadata or {})

    @property
    def num_synapses(self) -> int:
        return len(self.src)

    def synapses(self) -> Iterator[Synapse]:
        for s, d, w in zip(self.src.tolist(), self.dst.tolist(), self.weight.tolist()):
            yield Synapse(s, d, w)

    def neuron_map(self) -> dict[int, Neuron]:
        return {n.id: n for n in self.neurons}

    def ids(self, kind: str | None = None) -> list[int]:
        return sorted(n.id for n in self.neurons if kind is None or n.kind == kind)

    @property
    def input_ids(self) -> list[int]:
        return self.ids(INPUT)

    @property
    def output_ids(self) -> list[int]:
        return self.ids(OUTPUT)

    def fanin(self) -> dict[int, int]:
        """Number of incoming synapses per neuron (the ``m`` of each neuron)."""
        counts = Counter(self.dst.tolist())
        return {n.id: counts.get(n.id, 0) for n in self.neurons}

    def incoming(self) -> dict[int, list[tuple[int, float]]]:
        """``dst -> [(src, weight), ...]`` with sources in ascending id order."""
        order = np.lexsort((self.src, self.dst))
        result: dict[int, list[tuple[int, float]]] = {n.id: [] for n in self.neurons}
        for s, d, w in zip(self.src[order].tolist(), self.dst[order].tolist(), self.weight[order].tolist()):
            result.setdefault(d, []).append((s, w))
        return result

    def with_synapses(self, src, dst, weight, metadata=None) -> "Network":
        return Network(self.neurons, src, dst, weight, self.metadata if metadata is None else metadata)

    def canonical(self) -> "Network":
        """Same network with neurons sorted by id and synapses by (src, dst)."""
        order = np.lexsort((self.dst, self.src))
        neurons = tuple(sorted(self.neurons, key=lambda n: n.id))
        return Network(neurons, self.src[order], self.dst[order], self.weight[order], self.metadata)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        a, b = self.canonical(), other.canonical()
        return (a.neurons == b.neurons and a.metadata == b.metadata
                and np.array_equal(a.src, b.src) and np.array_equal(a.dst, b.dst)
                and np.array_equal(a.weight, b.weight))

    __hash__ = None

    def __repr__(self):
        name = self.metadata.get("name", "")
        return f"Network({name!r}, neurons={len(self.neurons)}, synapses={self.num_synapses})"


def validate_network(net: Network) -> list[Violation]:
    """Return every invariant violation found in ``net``; empty means valid."""
    out: list[Violation] = []
    seen: set[int] = set()
    for n in net.neurons:
        if n.id in seen:
            out.append(Violation("duplicate neuron", (n.id,)))
        seen.add(n.id)
        if n.kind not in KINDS:
            out.append(Violation("unknown kind", (n.id,), repr(n.kind)))
        if not n.r_max > 0:
            out.append(Violation("bad parameter", (n.id,), f"r_max={n.r_max}"))
        if not n.gain > 0:
            out.append(Violation("bad parameter", (n.id,), f"gain={n.gain}"))
        if not n.threshold >= 0:
            out.append(Violation("bad parameter", (n.id,), f"threshold={n.threshold}"))

    kinds = {n.id: n.kind for n in net.neurons}
    pairs: Counter = Counter()
    for s, d, w in net.synapses():
        if s not in kinds or d not in kinds:
            out.append(Violation("dangling endpoint", (s, d)))
        elif kinds[d] == INPUT:
            out.append(Violation("input with fanin", (s, d)))
        if not np.isfinite(w):
            out.append(Violation("bad weight", (s, d), repr(w)))
        pairs[(s, d)] += 1
    for pair, count in sorted(pairs.items()):
        if count > 1:
            out.append(Violation("parallel synapse", pair, f"{count} synapses"))

    if not any(k == INPUT for k in kinds.values()):
        out.append(Violation("no input neuron", ()))
    if not any(k == OUTPUT for k in kinds.values()):
        out.append(Violation("no output neuron", ()))
    return out


def check_network(net: Network) -> Network:
    problems = validate_network(net)
    if problems:
        raise NetworkValidationError(problems)
    return net


@dataclass(frozen=True)
class FaninStats:
    histogram: dict[int, int]
    fraction_exceeding: float
    limit: int


def fanin_stats(net: Network, limit: int) -> FaninStats:
    """Fanin histogram over non-input neurons and the fraction above ``limit``."""
    if limit < 1:
        raise ValueError("limit must be >= 1")
    fanin = net.fanin()
    kinds = {n.id: n.kind for n in net.neurons}
    values = [m for nid, m in fanin.items() if kinds[nid] != INPUT]
    hist = dict(sorted(Counter(values).items()))
    frac = sum(1 for m in values if m > limit) / len(values) if values else 0.0
    return FaninStats(hist, frac, limit)


@dataclass(frozen=True)
class WeightSampler:
    """Weight distribution for the generators.

    ``dist`` is ``"uniform"`` (on ``[a, b)``) or ``"normal"`` (mean ``a``,
    std ``b``). ``scale`` divides samples by ``1``, the fanin, or its square root.
    """

    dist: str = "uniform"
    a: float = -1.0
    b: float = 1.0
    scale: str = "none"

    def sample(self, rng: np.random.Generator, size, fanin: int) -> np.ndarray:
        if self.dist == "uniform":
            w = rng.uniform(self.a, self.b, size)
        elif self.dist == "normal":
            w = rng.normal(self.a, self.b, size)
        else:
            raise ValueError(f"unknown distribution {self.dist!r}")
        if self.scale == "fanin":
            w = w / max(fanin, 1)
        elif self.scale == "sqrt_fanin":
            w = w / np.sqrt(max(fanin, 1))
        elif self.scale != "none":
            raise ValueError(f"unknown scale {self.scale!r}")
        return w

    @classmethod
    def parse(cls, text: str) -> "WeightSampler":
        """Parse ``dist:a:b[:scale]``, e.g. ``uniform:0:2:fanin``."""
        parts = text.split(":")
        if len(parts) not in (3, 4):
            raise ValueError(f"bad weight sampler {text!r}")
        scale = parts[3] if len(parts) == 4 else "none"
        return cls(parts[0], float(parts[1]), float(parts[2]), scale)

    def __str__(self):
        return f"{self.dist}:{self.a!r}:{self.b!r}:{self.scale}"


def generate_feedforward(layer_sizes: Sequence[int], weight_sampler: WeightSampler | None = None,
                         seed: int = 0, neuron_params: dict | None = None) -> Network:
    """Fully connected layered network; first layer inputs, last layer outputs.

    Neuron ids are assigned layer by layer starting at 0.
    """
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError("need at least two layers")
    if any(s < 1 for s in sizes):
        raise ValueError("layer sizes must be >= 1")
    sampler = weight_sampler or WeightSampler()
    params = neuron_params or {}
    rng = np.random.default_rng(seed)

    neurons = []
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    for li, size in enumerate(sizes):
        kind = INPUT if li == 0 else OUTPUT if li == len(sizes) - 1 else HIDDEN
        neurons.extend(Neuron(int(offsets[li] + j), kind, **params) for j in range(size))

    srcs, dsts, ws = [], [], []
    for li in range(len(sizes) - 1):
        n_in, n_out = sizes[li], sizes[li + 1]
        s = np.tile(np.arange(n_in, dtype=np.int64) + offsets[li], n_out)
        d = np.repeat(np.arange(n_out, dtype=np.int64) + offsets[li + 1], n_in)
        srcs.append(s)
        dsts.append(d)
        ws.append(sampler.sample(rng, n_in * n_out, n_in))
    meta = {"name": "feedforward-" + "-".join(map(str, sizes)), "topology": "feedforward",
            "seed": str(seed), "weights": str(sampler)}
    return Network(tuple(neurons), np.concatenate(srcs), np.concatenate(dsts), np.concatenate(ws), meta)


def generate_reservoir(size: int, connection_prob: float, seed: int = 0,
                       weight_sampler: WeightSampler | None = None, num_inputs: int = 1,
                       num_outputs: int = 1, max_row_gain: float | None = 0.9,
                       neuron_params: dict | None = None) -> Network:
    """Erdos-Renyi recurrent reservoir without self-loops.

    ``num_inputs`` external input neurons (ids ``0..num_inputs-1``) drive every
    reservoir neuron; the last ``num_outputs`` reservoir neurons are outputs.
    The metadata field ``recurrent_synapses`` counts reservoir-to-reservoir
    synapses only. When ``max_row_gain`` is set, recurrent weights are rescaled
    so the largest absolute row sum equals it, which keeps the rate dynamics a
    contraction for unit gain.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    if not 0 < connection_prob <= 1:
        raise ValueError("connection_prob must be in (0, 1]")
    if num_inputs < 1 or not 1 <= num_outputs <= size:
        raise ValueError("need >= 1 input and 1..size outputs")
    sampler = weight_sampler or WeightSampler()
    params = neuron_params or {}
    rng = np.random.default_rng(seed)

    neurons = [Neuron(i, INPUT, **params) for i in range(num_inputs)]
    base = num_inputs
    for j in range(size):
        kind = OUTPUT if j >= size - num_outputs else HIDDEN
        neurons.append(Neuron(base + j, kind, **params))

    mask = rng.random((size, size)) < connection_prob  # [dst, src]
    np.fill_diagonal(mask, False)
    d_idx, s_idx = np.nonzero(mask)
    w = sampler.sample(rng, len(d_idx), max(int(round(connection_prob * (size - 1))), 1))
    if max_row_gain is not None and len(w):
        row_sum = np.bincount(d_idx, weights=np.abs(w), minlength=size)
        top = row_sum.max()
        if top > 0:
            w = w * (max_row_gain / top)

    in_src = np.repeat(np.arange(num_inputs, dtype=np.int64), size)
    in_dst = np.tile(np.arange(size, dtype=np.int64) + base, num_inputs)
    in_w = rng.uniform(0.0, 1.0, num_inputs * size)

    src = np.concatenate([in_src, s_idx.astype(np.int64) + base])
    dst = np.concatenate([in_dst, d_idx.astype(np.int64) + base])
    weight = np.concatenate([in_w, w])
    meta = {"name": f"reservoir-{size}", "topology": "reservoir", "seed": str(seed),
            "connection_prob": repr(float(connection_prob)), "recurrent_synapses": str(len(d_idx)),
            "weights": str(sampler)}
    return Network(tuple(neurons), src, dst, weight, meta)


def shared_input_example() -> Network:
    """Three output neurons over six shared inputs, sized for 4x4 crossbars.

    Inputs x1..x6 have ids 0..5; y1, y2, y3 have ids 6, 7, 8 with fanins 2, 5
    and 4. Whole-neuron clustering needs three 4x4 crossbars and must drop the
    weakest synapse of y2 (from x6); decomposed units fit in two.
    """
    neurons = [Neuron(i, INPUT) for i in range(6)] + [Neuron(i, OUTPUT) for i in (6, 7, 8)]
    synapses = [
        (0, 6, 0.6), (3, 6, 0.5),
        (0, 7, 0.9), (1, 7, 0.8), (2, 7, 0.7), (4, 7, 0.3), (5, 7, 0.1),
        (1, 8, 0.8), (2, 8, 0.6), (3, 8, 0.7), (5, 8, 0.4),
    ]
    return Network.from_synapses(neurons, synapses, {"name": "shared-input-example", "topology": "example"})
