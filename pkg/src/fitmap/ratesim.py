"""Mean-rate simulator for rectified, saturating linear neurons."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp

from .core import INPUT, FitmapError, Network, Neuron

RATE_FLOOR = 1e-9
DENSE_BLOCK = 1 << 16


class ConvergenceError(FitmapError):
    def __init__(self, message, residual=None, iterations=None):
        self.residual, self.iterations = residual, iterations
        super().__init__(message)


@dataclass(frozen=True)
class SimConfig:
    """Solver settings; ``saturate=False`` ignores every neuron's ``r_max``."""

    max_iterations: int = 10_000
    damping: float = 0.5
    convergence_tol: float = 1e-9
    saturate: bool = True

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must be in (0, 1]")
        if not self.convergence_tol > 0:
            raise ValueError("convergence_tol must be > 0")


def neuron_transfer(input_current, params: Neuron, saturate: bool = True):
    """Firing rate for an input current: ``min(r_max, G * max(0, I - theta))``."""
    rate = params.gain * np.maximum(0.0, np.asarray(input_current, dtype=float) - params.threshold)
    if saturate:
        rate = np.minimum(params.r_max, rate)
    return float(rate) if rate.ndim == 0 else rate


class _Level(NamedTuple):
    rows: np.ndarray
    weights: sp.csr_matrix | np.ndarray
    threshold: np.ndarray
    gain: np.ndarray
    r_max: np.ndarray


@dataclass
class CompiledNetwork:
    """Index layout and per-level weight blocks of a network."""

    ids: np.ndarray
    index: dict
    input_rows: np.ndarray
    levels: list
    acyclic: bool

    @classmethod
    def build(cls, net: Network) -> "CompiledNetwork":
        neurons = sorted(net.neurons, key=lambda n: n.id)
        ids = np.array([n.id for n in neurons], dtype=np.int64)
        index = {int(i): k for k, i in enumerate(ids)}
        n = len(ids)
        rows = np.fromiter((index[d] for d in net.dst.tolist()), dtype=np.int64, count=net.num_synapses)
        cols = np.fromiter((index[s] for s in net.src.tolist()), dtype=np.int64, count=net.num_synapses)
        weights = sp.csr_matrix((net.weight, (rows, cols)), shape=(n, n))
        weights.sort_indices()

        is_input = np.array([nr.kind == INPUT for nr in neurons])
        order, back = _dfs_order(weights, is_input)
        level = np.zeros(n, dtype=np.int64)
        position = np.empty(n, dtype=np.int64)
        position[order] = np.arange(len(order))
        indptr, indices = weights.indptr, weights.indices
        for v in order:
            preds = indices[indptr[v]:indptr[v + 1]]
            preds = preds[~is_input[preds] & (position[preds] < position[v])]
            level[v] = 1 + (level[preds].max() if len(preds) else 0)

        theta = np.array([nr.threshold for nr in neurons])
        gain = np.array([nr.gain for nr in neurons])
        r_max = np.array([nr.r_max for nr in neurons])
        levels = []
        if len(order):
            order = np.asarray(order, dtype=np.int64)
            by_level = order[np.argsort(level[order], kind="stable")]
            bounds = np.flatnonzero(np.diff(level[by_level])) + 1
            for chunk in np.split(by_level, bounds):
                chunk = np.sort(chunk)
                block = weights[chunk]
                if len(chunk) * n <= DENSE_BLOCK:
                    block = block.toarray()  # small blocks: dense products avoid sparse call overhead
                levels.append(_Level(chunk, block, theta[chunk], gain[chunk], r_max[chunk]))
        return cls(ids, index, np.flatnonzero(is_input), levels, not back)


def _dfs_order(weights: sp.csr_matrix, is_input: np.ndarray):
    """Reverse postorder of non-input neurons and whether a back edge exists."""
    succ = weights.T.tocsr()
    succ.sort_indices()
    n = weights.shape[0]
    state = np.zeros(n, dtype=np.int8)  # 0 new, 1 on stack, 2 done
    post: list[int] = []
    back = False
    for root in range(n):
        if state[root] or is_input[root]:
            continue
        stack = [(root, iter(succ.indices[succ.indptr[root]:succ.indptr[root + 1]].tolist()))]
        state[root] = 1
        while stack:
            v, it = stack[-1]
            for w in it:
                if is_input[w]:
                    continue
                if state[w] == 0:
                    state[w] = 1
                    stack.append((w, iter(succ.indices[succ.indptr[w]:succ.indptr[w + 1]].tolist())))
                    break
                if state[w] == 1:
                    back = True
            else:
                state[v] = 2
                post.append(v)
                stack.pop()
    post.reverse()
    return post, back


@dataclass
class BatchResult:
    ids: np.ndarray
    rates: np.ndarray  # (neurons, samples)
    converged: bool
    iterations: int
    residual: float

    def vector(self, sample: int = 0) -> dict[int, float]:
        return dict(zip(self.ids.tolist(), self.rates[:, sample].tolist()))

    def rows(self, ids: Iterable[int]) -> np.ndarray:
        lookup = {int(i): k for k, i in enumerate(self.ids)}
        return self.rates[[lookup[int(i)] for i in ids]]


@dataclass
class SimResult:
    rates: dict
    converged: bool
    iterations: int
    residual: float


def input_matrix(net: Network, batch) -> np.ndarray:
    """Stack input RateVectors into an (inputs, samples) array in input-id order."""
    input_ids = net.input_ids
    if isinstance(batch, np.ndarray):
        arr = np.asarray(batch, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != len(input_ids):
            raise ValueError(f"expected (samples, {len(input_ids)}) input array")
        return arr.T.copy()
    cols = []
    expected = set(input_ids)
    for vec in batch:
        if set(int(k) for k in vec) != expected:
            raise ValueError("input rates must cover exactly the input neurons")
        cols.append([float(vec[i]) for i in input_ids])
    if not cols:
        raise ValueError("empty batch")
    return np.array(cols, dtype=float).T


def simulate_batch(net: Network, batch, cfg: SimConfig | None = None,
                   compiled: CompiledNetwork | None = None) -> BatchResult:
    """Simulate every sample of ``batch`` at once.

    Acyclic networks are evaluated exactly in one topological sweep. Cyclic
    networks use damped Gauss-Seidel sweeps in depth-first order until the
    relative rate change drops below ``cfg.convergence_tol``, then one
    undamped sweep.
    """
    cfg = cfg or SimConfig()
    comp = compiled or CompiledNetwork.build(net)
    x = input_matrix(net, batch)
    if np.any(x < 0):
        raise ValueError("input rates must be nonnegative")
    rates = np.zeros((len(comp.ids), x.shape[1]))
    rates[comp.input_rows] = x

    def sweep(lam):
        for lv in comp.levels:
            current = lv.weights @ rates
            new = lv.gain[:, None] * np.maximum(0.0, current - lv.threshold[:, None])
            if cfg.saturate:
                new = np.minimum(lv.r_max[:, None], new)
            rates[lv.rows] = new if lam == 1.0 else (1.0 - lam) * rates[lv.rows] + lam * new

    if comp.acyclic:
        sweep(1.0)
        return BatchResult(comp.ids, rates, True, 1, 0.0)

    residual = np.inf
    free = np.ones(len(comp.ids), dtype=bool)
    free[comp.input_rows] = False
    for it in range(1, cfg.max_iterations + 1):
        before = rates[free]
        with np.errstate(over="ignore", invalid="ignore"):
            sweep(cfg.damping)
            after = rates[free]
            scale = max(np.abs(after).max(initial=0.0), RATE_FLOOR)
            residual = float(np.abs(after - before).max(initial=0.0) / scale)
        if not np.isfinite(residual):
            return BatchResult(comp.ids, rates, False, it, float("inf"))
        if residual <= cfg.convergence_tol:
            # damping only halves rates headed for zero; one plain sweep lands rectified neurons on 0
            sweep(1.0)
            return BatchResult(comp.ids, rates, True, it, residual)
    return BatchResult(comp.ids, rates, False, cfg.max_iterations, residual)


def simulate(net: Network, inputs: Mapping[int, float], cfg: SimConfig | None = None) -> SimResult:
    res = simulate_batch(net, [inputs], cfg)
    return SimResult(res.vector(0), res.converged, res.iterations, res.residual)


class RateError(NamedTuple):
    max_rel_error: float
    rmse: float


def rate_error(reference: Mapping[int, float], test: Mapping[int, float], on: Sequence[int]) -> RateError:
    ids = list(on)
    if not ids:
        return RateError(0.0, 0.0)
    ref = np.array([reference[i] for i in ids], dtype=float)
    got = np.array([test[i] for i in ids], dtype=float)
    return _errors(ref, got)


def _errors(ref: np.ndarray, got: np.ndarray) -> RateError:
    diff = np.abs(got - ref)
    rel = diff / np.maximum(np.abs(ref), RATE_FLOOR)
    return RateError(float(rel.max()), float(np.sqrt(np.mean(diff ** 2))))


def batch_rate_error(reference: np.ndarray, test: np.ndarray) -> RateError:
    """Rate error pooled over a batch of equally shaped rate arrays."""
    if reference.size == 0:
        return RateError(0.0, 0.0)
    return _errors(np.asarray(reference, float).ravel(), np.asarray(test, float).ravel())


def random_batch(net: Network, size: int, seed: int, fraction: float = 0.1) -> list[dict[int, float]]:
    """Seeded input rates uniform in ``[0, fraction * r_max]`` per input neuron."""
    rng = np.random.default_rng(seed)
    nm = net.neuron_map()
    ids = net.input_ids
    hi = np.array([nm[i].r_max * fraction for i in ids])
    samples = rng.uniform(0.0, 1.0, (size, len(ids))) * hi
    return [dict(zip(ids, row.tolist())) for row in samples]
