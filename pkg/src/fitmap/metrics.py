"""Crossbar utilization, energy accounting and baseline-vs-proposed reports."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .core import FitmapError
from .mapper import CrossbarSpec, Mapping
from .ratesim import batch_rate_error


@dataclass(frozen=True)
class EnergyModel:
    """Energies in joules. Switch bandwidth (events/s) is recorded, not used."""

    e_spike: float = 50e-12
    e_route: float = 147e-12
    e_idle_neuron: float = 50e-12
    e_idle_synapse: float = 1e-12
    switch_bandwidth: float = 1.8e9

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"{k} must be >= 0")


class Utilization(NamedTuple):
    neuron_util: float  # percent
    synapse_util: float  # percent


def utilization(mapping: Mapping, spec: CrossbarSpec | None = None) -> Utilization:
    n = spec.n if spec else mapping.n
    count = mapping.crossbar_count
    if count == 0:
        return Utilization(0.0, 0.0)
    outputs = sum(xb.outputs_used for xb in mapping.crossbars)
    cells = sum(xb.crosspoints for xb in mapping.crossbars)
    return Utilization(100.0 * outputs / (count * n), 100.0 * cells / (count * n * n))


def wasted_energy(mapping: Mapping, spec: CrossbarSpec | None = None, em: EnergyModel | None = None) -> float:
    """Idle-cell energy summed over allocated crossbars."""
    n = spec.n if spec else mapping.n
    em = em or EnergyModel()
    total = 0.0
    for xb in mapping.crossbars:
        total += (n - xb.outputs_used) * em.e_idle_neuron + (n * n - xb.crosspoints) * em.e_idle_synapse
    return total


def interconnect_energy(mapping: Mapping, rates: dict, window: float = 1.0, em: EnergyModel | None = None) -> float:
    """Routing energy of spikes crossing crossbar boundaries during ``window`` seconds."""
    em = em or EnergyModel()
    total = 0.0
    for e in mapping.edges:
        total += rates[e.source] * window * em.e_route
    return total


@dataclass
class VariantResult:
    """A mapped variant plus the simulations needed to judge its fidelity.

    ``reference``/``outputs`` are (samples, outputs) rate arrays simulated
    without saturation; ``reference_sat``/``outputs_sat`` with saturation and
    are used for argmax agreement. Variant outputs are already de-normalized.
    ``unit_rates`` are the mean rates of mapped units as they would fire on
    hardware.
    """

    mapping: Mapping
    source_id: str
    source_synapses: int
    chain_links: int
    reference: np.ndarray
    outputs: np.ndarray
    reference_sat: np.ndarray
    outputs_sat: np.ndarray
    unit_rates: dict = field(default_factory=dict)


class ReportError(FitmapError):
    pass


def argmax_match_rate(reference: np.ndarray, test: np.ndarray) -> float:
    if reference.size == 0:
        return 1.0
    return float(np.mean(np.argmax(reference, axis=1) == np.argmax(test, axis=1)))


def variant_metrics(v: VariantResult, em: EnergyModel, window: float = 1.0) -> dict:
    m = v.mapping
    util = utilization(m)
    err = batch_rate_error(v.reference, v.outputs)
    wasted = wasted_energy(m, em=em)
    inter = interconnect_energy(m, v.unit_rates, window, em)
    accounting = (m.synapse_crosspoints + len(m.dropped) + m.chain_crosspoints
                  == v.source_synapses + v.chain_links)
    return {
        "crossbar_count": m.crossbar_count,
        "neuron_utilization": util.neuron_util,
        "synapse_utilization": util.synapse_util,
        "wasted_energy": wasted,
        "interconnect_energy": inter,
        "total_energy": wasted + inter,
        "dropped_synapse_count": len(m.dropped),
        "inter_crossbar_edges": len(m.edges),
        "chain_crosspoints": m.chain_crosspoints,
        "max_rel_rate_error": err.max_rel_error,
        "rmse": err.rmse,
        "argmax_match_rate": argmax_match_rate(v.reference_sat, v.outputs_sat),
        "accounting_ok": bool(accounting),
    }


RATIO_FIELDS = ("crossbar_count", "neuron_utilization", "synapse_utilization", "wasted_energy",
                "interconnect_energy", "total_energy", "dropped_synapse_count")


@dataclass
class CompareReport:
    baseline: dict
    proposed: dict
    ratios: dict
    n: int
    source: str
    energy_model: dict

    def to_dict(self) -> dict:
        return {"version": 1, "source": self.source, "crossbar_n": self.n, "energy_model": self.energy_model,
                "baseline": self.baseline, "proposed": self.proposed, "ratios": self.ratios}


def _ratio(p, b):
    if b == 0:
        return 1.0 if p == 0 else None
    return p / b


def compare_report(baseline: VariantResult, proposed: VariantResult, em: EnergyModel | None = None,
                   window: float = 1.0) -> CompareReport:
    em = em or EnergyModel()
    if baseline.source_id != proposed.source_id:
        raise ReportError("variants were computed from different source networks")
    if baseline.mapping.n != proposed.mapping.n:
        raise ReportError("variants use different crossbar sizes")
    b = variant_metrics(baseline, em, window)
    p = variant_metrics(proposed, em, window)
    ratios = {k: _ratio(p[k], b[k]) for k in RATIO_FIELDS}
    return CompareReport(b, p, ratios, baseline.mapping.n, baseline.source_id, asdict(em))


def serialize_report(report: CompareReport) -> str:
    return json.dumps(report.to_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def crossbar_rows_csv(mappings: dict[str, Mapping], em: EnergyModel | None = None) -> str:
    """Per-crossbar CSV rows for plotting."""
    em = em or EnergyModel()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variant", "crossbar", "units", "rows", "crosspoints", "neuron_util", "synapse_util",
                "wasted_energy"])
    for name in sorted(mappings):
        m = mappings[name]
        n = m.n
        for xb in m.crossbars:
            wasted = (n - xb.outputs_used) * em.e_idle_neuron + (n * n - xb.crosspoints) * em.e_idle_synapse
            w.writerow([name, xb.index, xb.outputs_used, len(xb.rows), xb.crosspoints,
                        repr(100.0 * xb.outputs_used / n), repr(100.0 * xb.crosspoints / (n * n)), repr(wasted)])
    return buf.getvalue()
