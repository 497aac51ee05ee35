"""Data-driven weight normalization of unrolled chains."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .core import FitmapError, Network
from .decompose import UnitNetwork, chain_order
from .ratesim import ConvergenceError, SimConfig, simulate_batch

log = logging.getLogger(__name__)


class NormalizationError(FitmapError):
    pass


@dataclass(frozen=True)
class ActivationStats:
    """Batch maxima of synaptic activations ``a_i = rate(n_i) * w_i``.

    ``synapse_max`` is keyed by ``(src, dst)``. ``stage_max[v][j-1]`` is the
    largest current entering stage ``j`` of neuron ``v``'s chain, i.e. the
    maximum over the batch of ``a_1 + ... + a_{j+1}`` in chain order; for
    stage 1 this is ``max(a_1 + a_2)``.
    """

    synapse_max: dict
    stage_max: dict
    samples: int


@dataclass(frozen=True)
class NormalizationPlan:
    factors: dict  # neuron id -> tuple of per-stage factors
    k: float
    warnings: tuple = field(default_factory=tuple)

    def cumulative(self, neuron_id: int) -> float:
        f = self.factors.get(neuron_id)
        return f[-1] if f else 1.0


def collect_activation_stats(net: Network, batch, cfg: SimConfig | None = None) -> ActivationStats:
    if len(batch) == 0:
        raise ValueError("calibration batch is empty")
    res = simulate_batch(net, batch, cfg)
    if not res.converged:
        raise ConvergenceError(f"simulation did not converge (residual {res.residual:.3g})",
                               res.residual, res.iterations)
    lookup = {int(i): k for k, i in enumerate(res.ids)}
    rates = res.rates
    synapse_max = {}
    stage_max = {}
    for dst, inc in net.incoming().items():
        if not inc:
            continue
        ordered = chain_order(inc)
        src = [lookup[s] for s, _ in ordered]
        w = np.array([w for _, w in ordered])
        act = rates[src] * w[:, None]  # (fanin, samples)
        for (s, _), a in zip(ordered, act.max(axis=1).tolist()):
            synapse_max[(s, dst)] = a
        if len(ordered) > 2:
            partial = np.cumsum(act, axis=0)[1:]
            stage_max[dst] = partial.max(axis=1)
    return ActivationStats(synapse_max, stage_max, rates.shape[1])


def normalization_factors(stats: ActivationStats, k: float = 1.0) -> NormalizationPlan:
    """Per-stage factors ``S^j = k * stage_max[j]``.

    Stages that never see a positive current over the batch get factor 1 and
    a warning.
    """
    if not k > 0:
        raise ValueError("k must be > 0")
    factors = {}
    warnings = []
    for nid in sorted(stats.stage_max):
        peaks = np.asarray(stats.stage_max[nid], dtype=float)
        fs = []
        for j, peak in enumerate(peaks.tolist(), start=1):
            if peak > 0:
                fs.append(k * peak)
            else:
                fs.append(1.0)
                warnings.append(f"neuron {nid} stage {j}: no positive activation, factor set to 1")
        factors[nid] = tuple(fs)
    if warnings:
        log.warning("%d chain stages had no positive activation", len(warnings))
    return NormalizationPlan(factors, float(k), tuple(warnings))


def apply_normalization(unet: UnitNetwork, plan: NormalizationPlan) -> UnitNetwork:
    """Rescale unit weights so stage ``j`` of a chain carries its input over ``S^j``.

    External weights into stage ``j`` are divided by ``S^j`` and multiplied by
    the source neuron's own factor, so every input arrives in original units.
    The chain link into stage ``j`` becomes ``S^(j-1) / S^j``. The final unit
    then fires at the original rate divided by the last factor, recorded in
    ``scale`` for de-normalization.
    """
    if unet.max_fanin != 2:
        raise NormalizationError("normalize before recombining")
    chains = unet.chains()
    for origin, chain in chains.items():
        if len(chain) > 1:
            f = plan.factors.get(origin)
            if f is None or len(f) != len(chain):
                missing = chain[0] if f is None else chain[min(len(f), len(chain) - 1)]
                raise NormalizationError(f"no normalization factor for unit {missing.id} (neuron {origin})")
            if any(not x > 0 for x in f):
                raise NormalizationError(f"nonpositive factor for neuron {origin}")
    scale = {nid: (plan.factors[nid][-1] if len(chains.get(nid, ())) > 1 else 1.0) for nid in unet.final_unit}

    units = {}
    for origin, chain in chains.items():
        f = plan.factors.get(origin) if len(chain) > 1 else None
        for j, u in enumerate(chain):
            s_j = f[j] if f else 1.0
            ins = []
            for i in u.inputs:
                if i.chain:
                    ins.append(i._replace(weight=f[j - 1] / s_j))
                else:
                    ins.append(i._replace(weight=i.weight * scale.get(i.source, 1.0) / s_j))
            units[u.id] = replace(u, inputs=tuple(ins), threshold=u.threshold / s_j)
    units = {uid: units[uid] for uid in unet.units}
    meta = dict(unet.metadata)
    meta["normalized_k"] = repr(plan.k)
    return UnitNetwork(unet.inputs, units, dict(unet.final_unit), scale, unet.max_fanin, unet.source, meta)
