"""Packing units and neurons into n x n crossbars.

A crossbar has ``n`` shared input lines (rows) and ``n`` output columns. A
unit occupies one column and needs one row per distinct input signal; rows
are shared by every column on the same crossbar, so units reading the same
sources pack together.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .core import INPUT, FitmapError, Network, Synapse, Violation
from .decompose import UnitNetwork
from .ingest import FORMAT_VERSION, NetworkFormatError, dump_document, load_document


class CapacityError(FitmapError):
    def __init__(self, message, required=None):
        self.required = required
        super().__init__(message)


class InstanceTooLarge(FitmapError):
    pass


@dataclass(frozen=True)
class CrossbarSpec:
    n: int
    crossbar_budget: int | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("crossbar size n must be >= 2")


@dataclass(frozen=True)
class Crossbar:
    index: int
    units: tuple[int, ...]
    rows: tuple[int, ...]
    crosspoints: int

    @property
    def outputs_used(self) -> int:
        return len(self.units)


class Edge(NamedTuple):
    producer: int
    consumer: int
    source: int


@dataclass(frozen=True)
class Mapping:
    variant: str
    n: int
    crossbars: tuple[Crossbar, ...]
    placement: dict  # unit id -> crossbar index
    unit_origin: dict  # unit id -> original neuron id
    # unit id -> ((source, original weight or None for a chain link), ...)
    unit_inputs: dict
    dropped: tuple[Synapse, ...] = ()
    edges: tuple[Edge, ...] = ()
    metadata: dict = field(default_factory=dict)

    @property
    def crossbar_count(self) -> int:
        return len(self.crossbars)

    @property
    def chain_crosspoints(self) -> int:
        return sum(1 for ins in self.unit_inputs.values() for _, w in ins if w is None)

    @property
    def synapse_crosspoints(self) -> int:
        return sum(1 for ins in self.unit_inputs.values() for _, w in ins if w is not None)


class _Item(NamedTuple):
    id: int
    origin: int
    key: tuple
    rows: frozenset
    inputs: tuple


def _unit_items(unet: UnitNetwork) -> list[_Item]:
    items = []
    for u in unet.units.values():
        ins = tuple((i.source, None if i.chain else i.synapse_weight) for i in u.inputs)
        items.append(_Item(u.id, u.origin, (-u.fanin, u.origin, u.stages[0]),
                           frozenset(i.source for i in u.inputs), ins))
    return sorted(items, key=lambda it: it.key)


def _first_fit(items: Sequence[_Item], n: int) -> list[list[_Item]]:
    bins: list[tuple[set, list]] = []
    for it in items:
        for rows, members in bins:
            if len(members) < n and len(rows) + len(it.rows - rows) <= n:
                rows |= it.rows
                members.append(it)
                break
        else:
            if len(it.rows) > n:
                raise CapacityError(f"unit {it.id} needs {len(it.rows)} input lines > {n}")
            bins.append((set(it.rows), [it]))
    return [members for _, members in bins]


def _build(variant: str, spec: CrossbarSpec, groups: list[list[_Item]], dropped=(), metadata=None) -> Mapping:
    if spec.crossbar_budget is not None and len(groups) > spec.crossbar_budget:
        raise CapacityError(f"{len(groups)} crossbars required, budget is {spec.crossbar_budget}",
                            required=len(groups))
    placement, origin, inputs, crossbars = {}, {}, {}, []
    for idx, members in enumerate(groups):
        rows = set()
        for it in members:
            placement[it.id] = idx
            origin[it.id] = it.origin
            inputs[it.id] = it.inputs
            rows |= it.rows
        crossbars.append(Crossbar(idx, tuple(it.id for it in members), tuple(sorted(rows)),
                                  sum(len(it.inputs) for it in members)))
    return Mapping(variant, spec.n, tuple(crossbars), placement, origin, inputs,
                   tuple(sorted(dropped)), tuple(_edges(placement, inputs)), dict(metadata or {}))


def _edges(placement: dict, inputs: dict) -> list[Edge]:
    edges = set()
    for uid, ins in inputs.items():
        c = placement[uid]
        for src, _ in ins:
            p = placement.get(src)
            if p is not None and p != c:
                edges.add(Edge(p, c, src))
    return sorted(edges)


def pack_proposed(unet: UnitNetwork, spec: CrossbarSpec) -> Mapping:
    """First-fit-decreasing over units, sharing input lines within a crossbar.

    Units are visited by descending fanin, then origin neuron id, then stage.
    A unit joins the first crossbar with a free column whose row set stays
    within ``n`` after adding the unit's inputs.
    """
    too_wide = [u.id for u in unet.units.values() if u.fanin > spec.n]
    if too_wide:
        raise CapacityError(f"units {too_wide[:5]} exceed crossbar fanin {spec.n}; recombine first")
    return _build("proposed", spec, _first_fit(_unit_items(unet), spec.n),
                  metadata={"max_fanin": str(unet.max_fanin)})


def truncate_fanin(inputs: list[tuple[int, float]], n: int) -> tuple[list, list]:
    """Keep the ``n`` largest-magnitude inputs (lower source id wins ties)."""
    if len(inputs) <= n:
        return list(inputs), []
    ranked = sorted(inputs, key=lambda sw: (-abs(sw[1]), sw[0]))
    keep = sorted(ranked[:n])
    return keep, sorted(ranked[n:])


def map_baseline(net: Network, spec: CrossbarSpec) -> Mapping:
    """Whole-neuron first-fit-decreasing; fanin beyond ``n`` is dropped."""
    items, dropped = [], []
    inputs = set(net.input_ids)
    for nid, inc in net.incoming().items():
        if nid in inputs:
            continue
        keep, lost = truncate_fanin(inc, spec.n)
        dropped.extend(Synapse(s, nid, w) for s, w in lost)
        items.append(_Item(nid, nid, (-len(keep), nid, 1), frozenset(s for s, _ in keep),
                           tuple((s, w) for s, w in keep)))
    items.sort(key=lambda it: it.key)
    return _build("baseline", spec, _first_fit(items, spec.n), dropped)


def optimal_pack(unet: UnitNetwork, spec: CrossbarSpec, limit: int = 8) -> Mapping:
    """Exhaustive minimum-crossbar packing for small unit networks.

    Branch and bound over set partitions in lexicographic assignment order;
    among minimal packings the lexicographically smallest assignment is kept.
    """
    items = _unit_items(unet)
    if len(items) > limit:
        raise InstanceTooLarge(f"{len(items)} units exceeds the exhaustive limit {limit}; use pack_proposed")
    n = spec.n
    best: list = [len(items) + 1, None]
    assign = [0] * len(items)
    bins: list[tuple[set, int]] = []

    def search(i):
        if len(bins) >= best[0]:
            return
        if i == len(items):
            best[0], best[1] = len(bins), list(assign)
            return
        it = items[i]
        for b, (rows, count) in enumerate(bins):
            if count < n and len(rows | it.rows) <= n:
                assign[i] = b
                bins[b] = (rows | it.rows, count + 1)
                search(i + 1)
                bins[b] = (rows, count)
        if len(it.rows) <= n:
            assign[i] = len(bins)
            bins.append((set(it.rows), 1))
            search(i + 1)
            bins.pop()

    search(0)
    if best[1] is None:
        raise CapacityError("no feasible packing")
    groups: list[list[_Item]] = [[] for _ in range(best[0])]
    for it, b in zip(items, best[1]):
        groups[b].append(it)
    return _build("optimal", spec, groups)


def verify_mapping(mapping: Mapping, source: Network | UnitNetwork, spec: CrossbarSpec) -> list[Violation]:
    """Capacity, placement and synapse-conservation checks; empty means valid."""
    out: list[Violation] = []
    n = spec.n
    if mapping.n != n:
        out.append(Violation("size mismatch", (mapping.n, n)))
    seen: Counter = Counter()
    for xb in mapping.crossbars:
        if len(xb.rows) > n:
            out.append(Violation("input overflow", (xb.index,), f"{len(xb.rows)} > {n}"))
        if xb.outputs_used > n:
            out.append(Violation("output overflow", (xb.index,), f"{xb.outputs_used} > {n}"))
        if xb.crosspoints > n * n:
            out.append(Violation("crosspoint overflow", (xb.index,)))
        need = set()
        cp = 0
        for uid in xb.units:
            seen[uid] += 1
            if mapping.placement.get(uid) != xb.index:
                out.append(Violation("placement mismatch", (uid, xb.index)))
            ins = mapping.unit_inputs.get(uid, ())
            need.update(s for s, _ in ins)
            cp += len(ins)
        if not need <= set(xb.rows):
            out.append(Violation("missing input line", (xb.index,), str(sorted(need - set(xb.rows))[:5])))
        if cp != xb.crosspoints:
            out.append(Violation("crosspoint mismatch", (xb.index,), f"{xb.crosspoints} != {cp}"))
    for uid, c in seen.items():
        if c > 1:
            out.append(Violation("unit assigned twice", (uid,)))

    if isinstance(source, UnitNetwork):
        expected_units = {
            u.id: tuple((i.source, None if i.chain else i.synapse_weight) for i in u.inputs)
            for u in source.units.values()}
        original = source.source
    else:
        expected_units = None
        original = source
    placed = set(seen)
    want = set(expected_units) if expected_units is not None else {
        nr.id for nr in original.neurons if nr.kind != INPUT}
    for uid in sorted(want - placed):
        out.append(Violation("unassigned unit", (uid,)))
    for uid in sorted(placed - want):
        out.append(Violation("unknown unit", (uid,)))
    if expected_units is not None:
        for uid in sorted(want & placed):
            if Counter(mapping.unit_inputs[uid]) != Counter(expected_units[uid]):
                out.append(Violation("unit inputs differ", (uid,)))

    if original is not None:
        expected: dict = {}
        for s, d, w in original.synapses():
            expected.setdefault(d, Counter())[(s, w)] += 1
        got: dict = {}
        for uid, ins in mapping.unit_inputs.items():
            c = got.setdefault(mapping.unit_origin[uid], Counter())
            for s, w in ins:
                if w is not None:
                    c[(s, w)] += 1
        for syn in mapping.dropped:
            got.setdefault(syn.dst, Counter())[(syn.src, syn.weight)] += 1
        for nid in sorted(set(expected) | set(got)):
            if expected.get(nid, Counter()) != got.get(nid, Counter()):
                out.append(Violation("synapse not conserved", (nid,)))
        if mapping.dropped and isinstance(source, UnitNetwork):
            out.append(Violation("dropped synapses in decomposed mapping", (len(mapping.dropped),)))

    if tuple(_edges(mapping.placement, mapping.unit_inputs)) != tuple(mapping.edges):
        out.append(Violation("edge list mismatch", ()))
    return out


def mapping_document(mapping: Mapping) -> dict:
    units = []
    for xb in mapping.crossbars:
        for uid in xb.units:
            units.append({"id": uid, "origin": mapping.unit_origin[uid], "crossbar": xb.index,
                          "inputs": [[s, w] for s, w in mapping.unit_inputs[uid]]})
    return {
        "version": FORMAT_VERSION,
        "variant": mapping.variant,
        "n": mapping.n,
        "metadata": dict(sorted(mapping.metadata.items())),
        "crossbars": [{"index": xb.index, "rows": list(xb.rows), "units": list(xb.units),
                       "crosspoints": xb.crosspoints} for xb in mapping.crossbars],
        "units": units,
        "dropped": [{"src": s.src, "dst": s.dst, "w": s.weight} for s in mapping.dropped],
        "edges": [{"producer": e.producer, "consumer": e.consumer, "source": e.source} for e in mapping.edges],
    }


def serialize_mapping(mapping: Mapping) -> str:
    return dump_document(mapping_document(mapping))


def parse_mapping(text: str) -> Mapping:
    doc = load_document(text)
    try:
        crossbars = tuple(Crossbar(int(x["index"]), tuple(x["units"]), tuple(x["rows"]), int(x["crosspoints"]))
                          for x in doc["crossbars"])
        placement, origin, inputs = {}, {}, {}
        for u in doc["units"]:
            placement[u["id"]] = u["crossbar"]
            origin[u["id"]] = u["origin"]
            inputs[u["id"]] = tuple((s, None if w is None else float(w)) for s, w in u["inputs"])
        dropped = tuple(Synapse(d["src"], d["dst"], float(d["w"])) for d in doc["dropped"])
        edges = tuple(Edge(e["producer"], e["consumer"], e["source"]) for e in doc["edges"])
        return Mapping(doc["variant"], int(doc["n"]), crossbars, placement, origin, inputs, dropped, edges,
                       doc.get("metadata", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkFormatError(f"malformed mapping: {exc}") from None


def truncated_network(net: Network, mapping: Mapping) -> Network:
    """``net`` without the synapses a baseline mapping dropped."""
    if not mapping.dropped:
        return net
    lost = {(s.src, s.dst) for s in mapping.dropped}
    keep = [(s, d) not in lost for s, d in zip(net.src.tolist(), net.dst.tolist())]
    mask = np.array(keep, dtype=bool)
    return net.with_synapses(net.src[mask], net.dst[mask], net.weight[mask])

