"""Unrolling of high-fanin neurons into fanin-of-two unit chains.

A neuron with fanin ``m`` computes ``f(sum_i n_i w_i)``; its unrolled form is
a chain of ``m - 1`` units where unit 1 sums two external inputs and unit ``i``
adds one external input to the output of unit ``i - 1``. The final unit keeps
the neuron's id so downstream references stay valid; intermediate units get
fresh ids above every neuron id.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

from .core import HIDDEN, INPUT, FitmapError, Network, Neuron


class NothingToUnroll(FitmapError):
    """Raised for neurons with fanin < 2; callers pass such neurons through."""


class UnitInput(NamedTuple):
    source: int
    weight: float
    chain: bool = False
    # original synapse weight for external inputs, None for chain links
    synapse_weight: float | None = None


@dataclass(frozen=True)
class Unit:
    """A computation node; a FIT unit when ``stages[0] == stages[1]``."""

    id: int
    origin: int
    stages: tuple[int, int]
    inputs: tuple[UnitInput, ...]
    kind: str = HIDDEN
    threshold: float = 0.0
    gain: float = 1.0
    r_max: float = 1000.0
    successor: int | None = None

    @property
    def fanin(self) -> int:
        return len(self.inputs)

    @property
    def external(self) -> tuple[UnitInput, ...]:
        return tuple(i for i in self.inputs if not i.chain)

    @property
    def chain_input(self) -> UnitInput | None:
        for i in self.inputs:
            if i.chain:
                return i
        return None


FitUnit = Unit
SubUnit = Unit


@dataclass(frozen=True, eq=False)
class UnitNetwork:
    """Units that replace the non-input neurons of ``source``.

    ``final_unit`` maps each original neuron to the unit emitting its output,
    ``scale`` holds the factor that turns that unit's rate back into the
    original neuron's rate (1 unless normalized).
    """

    inputs: tuple[Neuron, ...]
    units: dict
    final_unit: dict
    scale: dict
    max_fanin: int = 2
    source: Network | None = None
    metadata: dict = field(default_factory=dict)

    def chain(self, origin: int) -> list[Unit]:
        return sorted((u for u in self.units.values() if u.origin == origin), key=lambda u: u.stages)

    def chains(self) -> dict[int, list[Unit]]:
        out: dict[int, list[Unit]] = {}
        for u in self.units.values():
            out.setdefault(u.origin, []).append(u)
        return {k: sorted(v, key=lambda u: u.stages) for k, v in sorted(out.items())}

    @property
    def num_units(self) -> int:
        return len(self.units)

    @property
    def chain_links(self) -> int:
        return sum(1 for u in self.units.values() for i in u.inputs if i.chain)

    def external_multiset(self) -> dict[int, Counter]:
        """Per origin neuron, the multiset of (source, original weight) pairs."""
        out: dict[int, Counter] = {}
        for u in self.units.values():
            c = out.setdefault(u.origin, Counter())
            for i in u.external:
                c[(i.source, i.synapse_weight)] += 1
        return out

    def to_network(self) -> Network:
        """Plain network whose neurons are the input neurons plus every unit."""
        neurons = list(self.inputs)
        syn = []
        for u in self.units.values():
            neurons.append(Neuron(u.id, u.kind, u.threshold, u.gain, u.r_max))
            syn.extend((i.source, u.id, i.weight) for i in u.inputs)
        meta = dict(self.metadata)
        meta["decomposed"] = "true"
        return Network.from_synapses(neurons, syn, meta)

    def denormalize(self, rates: dict[int, float]) -> dict[int, float]:
        """Original-neuron rates recovered from unit rates."""
        return {nid: rates[uid] * self.scale.get(nid, 1.0) for nid, uid in self.final_unit.items()}


def chain_order(inputs: Sequence[tuple[int, float]]) -> list[tuple[int, float]]:
    """Order in which a neuron's inputs enter its chain.

    Excitatory inputs come first, then inhibitory ones; each group in
    ascending source id. With nonnegative rates every partial sum then rises
    and falls at most once, so rectifying intermediate units never changes the
    final result, and neurons sharing sources consume them in the same order.
    """
    return sorted(inputs, key=lambda sw: (sw[1] < 0, sw[0]))


def _next_id(net: Network) -> int:
    return max((n.id for n in net.neurons), default=-1) + 1


def unroll_neuron(net: Network, neuron_id: int, first_id: int | None = None,
                  incoming: dict | None = None) -> list[Unit]:
    """Chain of ``m - 1`` FIT units for a neuron with fanin ``m >= 2``.

    Chain links carry weight 1; intermediate units have zero threshold and
    unit gain while the final unit (id ``neuron_id``) carries the neuron's own
    threshold, gain and kind.
    """
    neuron = net.neuron_map()[neuron_id]
    inc = (incoming or net.incoming())[neuron_id]
    m = len(inc)
    if m < 2:
        raise NothingToUnroll(f"neuron {neuron_id} has fanin {m}")
    next_id = _next_id(net) if first_id is None else first_id
    ordered = chain_order(inc)
    ids = [next_id + i for i in range(m - 2)] + [neuron_id]
    units = []
    for stage in range(1, m):
        if stage == 1:
            ins = tuple(UnitInput(s, w, False, w) for s, w in ordered[:2])
        else:
            s, w = ordered[stage]
            ins = (UnitInput(ids[stage - 2], 1.0, True), UnitInput(s, w, False, w))
        last = stage == m - 1
        units.append(Unit(
            id=ids[stage - 1], origin=neuron_id, stages=(stage, stage), inputs=ins,
            kind=neuron.kind if last else HIDDEN,
            threshold=neuron.threshold if last else 0.0,
            gain=neuron.gain if last else 1.0,
            r_max=neuron.r_max,
            successor=None if last else ids[stage]))
    return units


def _pass_through(neuron: Neuron, inc: list[tuple[int, float]]) -> Unit:
    ins = tuple(UnitInput(s, w, False, w) for s, w in chain_order(inc))
    return Unit(neuron.id, neuron.id, (1, 1), ins, neuron.kind, neuron.threshold, neuron.gain, neuron.r_max)


def unroll_network(net: Network) -> UnitNetwork:
    """Replace every neuron with fanin > 2 by its FIT chain.

    Neurons with fanin <= 2 become single pass-through units (including
    fanin-1 and orphaned fanin-0 neurons, which still need a hardware column).
    """
    incoming = net.incoming()
    next_id = _next_id(net)
    units: dict[int, Unit] = {}
    inputs = tuple(sorted((n for n in net.neurons if n.kind == INPUT), key=lambda n: n.id))
    for neuron in sorted(net.neurons, key=lambda n: n.id):
        if neuron.kind == INPUT:
            continue
        inc = incoming[neuron.id]
        if len(inc) > 2:
            chain = unroll_neuron(net, neuron.id, next_id, incoming)
            next_id += len(chain) - 1
            for u in chain:
                units[u.id] = u
        else:
            units[neuron.id] = _pass_through(neuron, inc)
    final = {n.id: n.id for n in net.neurons if n.kind != INPUT}
    meta = {"name": net.metadata.get("name", ""), "max_fanin": "2"}
    return UnitNetwork(inputs, units, final, {nid: 1.0 for nid in final}, 2, net, meta)


def fit_unit_count(net: Network) -> int:
    """Sum of ``m_i - 1`` over non-input neurons that have any fanin."""
    fanin = net.fanin()
    return sum(m - 1 for n in net.neurons if n.kind != INPUT and (m := fanin[n.id]) >= 1)


def realized_unit_count(net: Network) -> int:
    """Units ``unroll_network`` actually creates (pass-through neurons count 1)."""
    fanin = net.fanin()
    return sum(max(fanin[n.id] - 1, 1) for n in net.neurons if n.kind != INPUT)


def _stage_groups(num_stages: int, max_fanin: int) -> list[tuple[int, int]]:
    first = min(max_fanin - 1, num_stages)
    groups = [(1, first)]
    step = max_fanin - 1
    start = first + 1
    while start <= num_stages:
        end = min(start + step - 1, num_stages)
        groups.append((start, end))
        start = end + 1
    return groups


def _merge(stages: list[Unit], new_id: int, chain_source: int | None) -> Unit:
    """Collapse consecutive chain stages into one unit with composed weights.

    An input entering at stage j reaches the group's last stage scaled by the
    product of chain-link weights after j.
    """
    downstream = [1.0] * len(stages)
    for k in range(len(stages) - 2, -1, -1):
        link = stages[k + 1].chain_input
        downstream[k] = downstream[k + 1] * link.weight
    inputs = []
    head_link = stages[0].chain_input
    if head_link is not None:
        inputs.append(UnitInput(chain_source, head_link.weight * downstream[0], True))
    for k, st in enumerate(stages):
        for i in st.external:
            inputs.append(i._replace(weight=i.weight * downstream[k]))
    last = stages[-1]
    return replace(last, id=new_id, stages=(stages[0].stages[0], last.stages[1]),
                   inputs=tuple(inputs), successor=None)


def recombine(unet: UnitNetwork, max_fanin: int) -> UnitNetwork:
    """Regroup FIT chains into sequential subunits of fanin <= ``max_fanin``.

    The first subunit of a chain takes ``max_fanin`` external inputs, each
    later one takes ``max_fanin - 1`` external inputs plus the chain link.
    """
    if max_fanin < 2:
        raise ValueError("max_fanin must be >= 2")
    if unet.max_fanin != 2:
        raise ValueError("recombine expects an unrolled (fanin-of-two) unit network")
    ids = [n.id for n in unet.inputs] + list(unet.final_unit)
    next_id = max(ids, default=-1) + 1
    units: dict[int, Unit] = {}
    for origin, chain in unet.chains().items():
        if len(chain) == 1:
            units[chain[0].id] = chain[0]
            continue
        groups = _stage_groups(len(chain), max_fanin)
        new_ids = [next_id + g for g in range(len(groups) - 1)] + [unet.final_unit[origin]]
        next_id += len(groups) - 1
        prev = None
        merged = []
        for g, (a, b) in enumerate(groups):
            u = _merge(chain[a - 1:b], new_ids[g], prev)
            merged.append(u)
            prev = u.id
        for g, u in enumerate(merged):
            succ = new_ids[g + 1] if g + 1 < len(merged) else None
            units[u.id] = replace(u, successor=succ)
    meta = dict(unet.metadata)
    meta["max_fanin"] = str(max_fanin)
    return UnitNetwork(unet.inputs, units, dict(unet.final_unit), dict(unet.scale), max_fanin,
                       unet.source, meta)


def check_units(unet: UnitNetwork) -> list[str]:
    """Structural problems: fanin bound, chain shape, synapse conservation."""
    problems = []
    bound = unet.max_fanin
    for u in unet.units.values():
        if u.fanin > bound:
            problems.append(f"unit {u.id} fanin {u.fanin} > {bound}")
        n_chain = sum(1 for i in u.inputs if i.chain)
        if n_chain > 1:
            problems.append(f"unit {u.id} has {n_chain} chain inputs")
    for origin, chain in unet.chains().items():
        if unet.final_unit.get(origin) != chain[-1].id:
            problems.append(f"neuron {origin} does not end at its final unit")
        for prev, nxt in zip(chain, chain[1:]):
            link = nxt.chain_input
            if link is None or link.source != prev.id or prev.successor != nxt.id:
                problems.append(f"broken chain link {prev.id} -> {nxt.id}")
        if chain[0].chain_input is not None:
            problems.append(f"chain of {origin} starts with a chain input")
    if unet.source is not None:
        expected: dict[int, Counter] = {}
        for s, d, w in unet.source.synapses():
            expected.setdefault(d, Counter())[(s, w)] += 1
        got = unet.external_multiset()
        for nid in unet.final_unit:
            if expected.get(nid, Counter()) != got.get(nid, Counter()):
                problems.append(f"synapses of neuron {nid} not conserved")
    return problems
