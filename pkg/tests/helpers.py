"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

import math

import numpy as np

from fitmap.core import HIDDEN, INPUT, OUTPUT, Network, Neuron


def random_network(seed, n_in=None, n_hidden=None, n_out=None, p=None, recurrent=False, signed=True,
                   max_gain=0.9):
    """Small random network.

    Feedforward by default (sources have lower ids than targets); with
    ``recurrent`` any non-input neuron may feed any other, and weights are
    scaled so every row's absolute sum is at most ``max_gain``.
    """
    rng = np.random.default_rng(seed)
    n_in = n_in or int(rng.integers(1, 8))
    n_hidden = int(rng.integers(0, 10)) if n_hidden is None else n_hidden
    n_out = n_out or int(rng.integers(1, 5))
    p = float(rng.uniform(0.3, 1.0)) if p is None else p
    kinds = [INPUT] * n_in + [HIDDEN] * n_hidden + [OUTPUT] * n_out
    neurons = [Neuron(i, k) for i, k in enumerate(kinds)]
    syn = []
    total = len(kinds)
    for d in range(n_in, total):
        srcs = range(total) if recurrent else range(d)
        chosen = [s for s in srcs if s != d and rng.random() < p]
        if not chosen:
            chosen = [int(rng.integers(0, n_in))]
        lo = -1.0 if signed else 0.0
        w = rng.uniform(lo, 1.0, len(chosen))
        if recurrent:
            w *= max_gain / max(np.abs(w).sum(), 1e-12)
        w[np.abs(w) < 1e-3] = 1e-3
        syn.extend((s, d, float(x)) for s, x in zip(chosen, w))
    return Network.from_synapses(neurons, syn, {"name": f"random-{seed}"})


def naive_feedforward(net: Network, inputs: dict, saturate=True) -> dict:
    """Plain-Python simulation of an acyclic network, one neuron at a time."""
    incoming = {}
    for s, d, w in net.synapses():
        incoming.setdefault(d, []).append((s, w))
    params = net.neuron_map()
    rates = dict(inputs)
    pending = [n.id for n in net.neurons if n.kind != INPUT]
    while pending:
        progress = []
        for v in pending:
            ins = incoming.get(v, [])
            if all(s in rates for s, _ in ins):
                p = params[v]
                cur = math.fsum(rates[s] * w for s, w in ins)
                r = p.gain * max(0.0, cur - p.threshold)
                rates[v] = min(p.r_max, r) if saturate else r
                progress.append(v)
        if not progress:
            raise ValueError("network has a cycle")
        pending = [v for v in pending if v not in set(progress)]
    return rates


def linear_fixed_point(net: Network, inputs: dict) -> dict:
    """Fixed point ``r = W r + W_in x`` for a network that stays in its linear region."""
    ids = [n.id for n in net.neurons if n.kind != INPUT]
    idx = {v: k for k, v in enumerate(ids)}
    a = np.zeros((len(ids), len(ids)))
    b = np.zeros(len(ids))
    for s, d, w in net.synapses():
        if s in idx:
            a[idx[d], idx[s]] += w
        else:
            b[idx[d]] += w * inputs[s]
    r = np.linalg.solve(np.eye(len(ids)) - a, b)
    out = dict(inputs)
    out.update({v: float(r[k]) for v, k in idx.items()})
    return out


def set_partitions(items):
    """Every partition of ``items`` into non-empty blocks."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def brute_force_crossbars(unit_inputs: dict, n: int) -> int:
    """Fewest crossbars for units given as ``id -> set of input sources``."""
    best = None
    for part in set_partitions(list(unit_inputs)):
        if best is not None and len(part) >= best:
            continue
        if all(len(block) <= n and len(set().union(*(unit_inputs[u] for u in block))) <= n for block in part):
            best = len(part)
    return best
