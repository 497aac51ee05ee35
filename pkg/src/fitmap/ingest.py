"""``.snn.json`` network files and magnitude pruning."""

from __future__ import annotations

import json
from typing import NamedTuple

import numpy as np

from .core import INPUT, FitmapError, Network, NetworkValidationError, Neuron, validate_network

FORMAT_VERSION = 1


class NetworkFormatError(FitmapError):
    def __init__(self, message, line=None, column=None):
        self.line, self.column = line, column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


def _neuron_record(n: Neuron) -> dict:
    return {"id": n.id, "kind": n.kind, "threshold": n.threshold, "gain": n.gain, "r_max": n.r_max}


def network_document(net: Network, extra_neuron=None, extra_synapse=None) -> dict:
    """Canonical JSON-ready document for ``net``.

    ``extra_neuron(id)`` / ``extra_synapse(src, dst)`` may return additional
    fields merged into the respective records (used for decomposed networks).
    """
    canon = net.canonical()
    neurons = []
    for n in canon.neurons:
        rec = _neuron_record(n)
        if extra_neuron:
            rec.update(extra_neuron(n.id) or {})
        neurons.append(rec)
    synapses = []
    for s, d, w in canon.synapses():
        rec = {"src": s, "dst": d, "w": w}
        if extra_synapse:
            rec.update(extra_synapse(s, d) or {})
        synapses.append(rec)
    return {"version": FORMAT_VERSION, "metadata": dict(sorted(canon.metadata.items())),
            "neurons": neurons, "synapses": synapses}


def dump_document(doc) -> str:
    """Canonical text: sorted keys, one record per line, shortest float repr."""
    lines = ["{"]
    keys = sorted(doc)
    for i, key in enumerate(keys):
        value = doc[key]
        comma = "," if i < len(keys) - 1 else ""
        if isinstance(value, list) and value and isinstance(value[0], dict):
            lines.append(f"  {json.dumps(key)}: [")
            for j, item in enumerate(value):
                sep = "," if j < len(value) - 1 else ""
                lines.append("    " + json.dumps(item, sort_keys=True, allow_nan=False) + sep)
            lines.append("  ]" + comma)
        else:
            lines.append(f"  {json.dumps(key)}: {json.dumps(value, sort_keys=True, allow_nan=False)}{comma}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def serialize_network(net: Network) -> str:
    problems = validate_network(net)
    if problems:
        raise NetworkValidationError(problems)
    return dump_document(network_document(net))


def load_document(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"syntax error: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise NetworkFormatError("top-level value must be an object")
    version = doc.get("version")
    if version != FORMAT_VERSION:
        raise NetworkFormatError(f"unknown version {version!r}")
    return doc


def network_from_document(doc: dict) -> Network:
    try:
        neurons = tuple(
            Neuron(int(r["id"]), str(r["kind"]), float(r["threshold"]), float(r["gain"]), float(r["r_max"]))
            for r in doc["neurons"])
        syn = doc["synapses"]
        src = np.array([int(r["src"]) for r in syn], dtype=np.int64)
        dst = np.array([int(r["dst"]) for r in syn], dtype=np.int64)
        w = np.array([float(r["w"]) for r in syn], dtype=np.float64)
        meta = doc.get("metadata", {})
        if not isinstance(meta, dict):
            raise TypeError("metadata must be an object")
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkFormatError(f"malformed record: {exc}") from None
    return Network(neurons, src, dst, w, meta)


def parse_network(text: str | bytes) -> Network:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    net = network_from_document(load_document(text))
    problems = validate_network(net)
    if problems:
        raise NetworkValidationError(problems)
    return net


def read_network(path) -> Network:
    with open(path, encoding="utf-8") as fh:
        return parse_network(fh.read())


def write_network(net: Network, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_network(net))


class PruneResult(NamedTuple):
    network: Network
    removed_count: int


def prune_weights(net: Network, epsilon: float = 0.0) -> PruneResult:
    """Drop synapses with ``|w| < epsilon``.

    Non-input neurons left without any incoming synapse are kept and listed
    in the ``orphaned`` metadata entry.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    keep = np.abs(net.weight) >= epsilon
    removed = int((~keep).sum())
    if removed == 0:
        return PruneResult(net, 0)
    pruned = net.with_synapses(net.src[keep], net.dst[keep], net.weight[keep])
    fanin = pruned.fanin()
    orphans = sorted(n.id for n in net.neurons if n.kind != INPUT and fanin[n.id] == 0)
    meta = dict(net.metadata)
    if orphans:
        meta["orphaned"] = ",".join(map(str, orphans))
    return PruneResult(pruned.with_synapses(pruned.src, pruned.dst, pruned.weight, meta), removed)


def serialize_rates(batch, names=None) -> str:
    """``.rates.json`` document: a list of named RateVectors."""
    names = names or [f"sample-{i}" for i in range(len(batch))]
    records = [{"name": name, "rates": {str(k): float(v) for k, v in sorted(vec.items())}}
               for name, vec in zip(names, batch)]
    return dump_document({"version": FORMAT_VERSION, "rates": records})


def parse_rates(text: str) -> list[dict[int, float]]:
    doc = load_document(text)
    try:
        return [{int(k): float(v) for k, v in rec["rates"].items()} for rec in doc["rates"]]
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise NetworkFormatError(f"malformed rates file: {exc}") from None


def serialize_unit_network(unet) -> str:
    """Decomposed network in the ``.snn.json`` layout.

    Unit records add ``origin``, ``stages`` and ``scale``; synapses add
    ``chain`` for chain links and ``w0`` (the original weight) otherwise.
    """
    net = unet.to_network()
    problems = validate_network(net)
    if problems:
        raise NetworkValidationError(problems)
    units = unet.units
    original = {(i.source, u.id): i for u in units.values() for i in u.inputs}

    def neuron_extra(nid):
        u = units.get(nid)
        if u is None:
            return None
        rec = {"origin": u.origin, "stages": list(u.stages)}
        if unet.final_unit.get(u.origin) == nid:
            rec["scale"] = float(unet.scale.get(u.origin, 1.0))
        return rec

    def synapse_extra(s, d):
        i = original[(s, d)]
        return {"chain": True} if i.chain else {"w0": i.synapse_weight}

    doc = network_document(net, neuron_extra, synapse_extra)
    doc["metadata"]["max_fanin"] = str(unet.max_fanin)
    return dump_document(doc)


def parse_unit_network(text: str, source: Network | None = None):
    from .decompose import Unit, UnitInput, UnitNetwork

    doc = load_document(text)
    net = network_from_document(doc)
    problems = validate_network(net)
    if problems:
        raise NetworkValidationError(problems)
    if doc.get("metadata", {}).get("decomposed") != "true":
        raise NetworkFormatError("not a decomposed network")
    try:
        records = {int(r["id"]): r for r in doc["neurons"]}
        ins: dict[int, list] = {}
        for r in doc["synapses"]:
            chain = bool(r.get("chain", False))
            w0 = None if chain else float(r["w0"])
            ins.setdefault(int(r["dst"]), []).append(UnitInput(int(r["src"]), float(r["w"]), chain, w0))
        succ = {i.source: dst for dst, lst in ins.items() for i in lst if i.chain}
        inputs, units, final, scale = [], {}, {}, {}
        for n in net.neurons:
            r = records[n.id]
            if n.kind == INPUT:
                inputs.append(n)
                continue
            # chain link first, then externals in the order they entered the chain
            ordered = sorted(ins.get(n.id, ()), key=lambda i: (not i.chain, (i.synapse_weight or 0) < 0, i.source))
            u = Unit(n.id, int(r["origin"]), tuple(r["stages"]), tuple(ordered), n.kind,
                     n.threshold, n.gain, n.r_max, succ.get(n.id))
            units[n.id] = u
            if u.origin == u.id:
                final[u.id] = u.id
                scale[u.id] = float(r.get("scale", 1.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise NetworkFormatError(f"malformed unit record: {exc}") from None
    meta = dict(net.metadata)
    meta.pop("decomposed", None)
    max_fanin = int(meta.get("max_fanin", "2"))
    return UnitNetwork(tuple(inputs), units, final, scale, max_fanin, source, meta)
