import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fitmap.core import INPUT, OUTPUT, Network, Neuron, WeightSampler, generate_feedforward, shared_input_example
from fitmap.mapper import Crossbar, CrossbarSpec, Edge, Mapping, map_baseline
from fitmap.metrics import (EnergyModel, ReportError, argmax_match_rate, compare_report, crossbar_rows_csv,
                            interconnect_energy, serialize_report, utilization, wasted_energy)
from fitmap.pipeline import PipelineConfig, baseline_variant, compare_network, reference_run
from fitmap.ratesim import random_batch

EM = EnergyModel()


def dense(n):
    neurons = [Neuron(i, INPUT) for i in range(n)] + [Neuron(n + j, OUTPUT) for j in range(n)]
    return Network.from_synapses(neurons, [(i, n + j, 0.1) for i in range(n) for j in range(n)])


def test_single_wide_neuron_utilization():
    neurons = [Neuron(i, INPUT) for i in range(128)] + [Neuron(128, OUTPUT)]
    net = Network.from_synapses(neurons, [(i, 128, 1.0) for i in range(128)])
    m = map_baseline(net, CrossbarSpec(128))
    u = utilization(m)
    assert u.neuron_util == pytest.approx(100 / 128)
    assert u.synapse_util == pytest.approx(100 * 128 / 16384)


def test_full_crossbar():
    m = map_baseline(dense(4), CrossbarSpec(4))
    assert m.crossbar_count == 1
    assert utilization(m) == (100.0, 100.0)
    assert wasted_energy(m, CrossbarSpec(4), EM) == 0.0


def test_empty_crossbar_wastes_everything():
    m = Mapping("proposed", 8, (Crossbar(0, (), (), 0),), {}, {}, {})
    assert wasted_energy(m, CrossbarSpec(8), EM) == 8 * EM.e_idle_neuron + 64 * EM.e_idle_synapse


def test_interconnect_single_edge():
    m = Mapping("proposed", 4, (Crossbar(0, (1,), (), 0), Crossbar(1, (2,), (1,), 1)), {1: 0, 2: 1},
                {1: 1, 2: 2}, {1: (), 2: ((1, None),)}, (), (Edge(0, 1, 1),))
    assert interconnect_energy(m, {1: 30.0, 2: 0.0}, 1.0, EM) == 30 * 147e-12
    assert interconnect_energy(m, {1: 30.0}, 1.0) == pytest.approx(4.41e-9)
    assert interconnect_energy(map_baseline(dense(4), CrossbarSpec(4)), {}, 1.0) == 0.0


def test_energy_model_defaults_and_validation():
    assert (EM.e_spike, EM.e_route, EM.e_idle_neuron, EM.e_idle_synapse) == (50e-12, 147e-12, 50e-12, 1e-12)
    with pytest.raises(ValueError):
        EnergyModel(e_route=-1.0)


def fixture_report():
    net = shared_input_example()
    cfg = PipelineConfig(example="shared-inputs", crossbar_n=4)
    return compare_network(net, random_batch(net, 16, 0), cfg)


def test_fixture_report():
    rep, base, prop = fixture_report()
    b, p = rep.baseline, rep.proposed
    assert (b["crossbar_count"], p["crossbar_count"]) == (3, 2)
    assert rep.ratios["crossbar_count"] == pytest.approx(2 / 3)
    assert (b["dropped_synapse_count"], p["dropped_synapse_count"]) == (1, 0)
    assert p["neuron_utilization"] > b["neuron_utilization"]
    assert p["synapse_utilization"] > b["synapse_utilization"]
    assert p["wasted_energy"] < b["wasted_energy"]
    assert p["interconnect_energy"] > 0
    assert p["total_energy"] < b["total_energy"]
    assert b["accounting_ok"] and p["accounting_ok"]
    assert 0 <= b["synapse_utilization"] <= 100


def test_self_comparison_ratios_are_one():
    net = shared_input_example()
    cfg = PipelineConfig(example="shared-inputs", crossbar_n=4)
    batch = random_batch(net, 4, 0)
    ref = reference_run(net, batch, cfg)
    v = baseline_variant(ref, map_baseline(net, CrossbarSpec(4)), cfg)
    rep = compare_report(v, v, EM)
    assert all(r == 1.0 for r in rep.ratios.values())


def test_mismatched_sources_rejected():
    net = shared_input_example()
    cfg = PipelineConfig(example="shared-inputs", crossbar_n=4)
    batch = random_batch(net, 4, 0)
    v = baseline_variant(reference_run(net, batch, cfg), map_baseline(net, CrossbarSpec(4)), cfg)
    other = dense(3)
    w = baseline_variant(reference_run(other, random_batch(other, 4, 0), cfg), map_baseline(other, CrossbarSpec(4)),
                         cfg)
    with pytest.raises(ReportError):
        compare_report(v, w)


def test_mnist_argmax():
    # with nonnegative weights truncation shrinks every hidden rate alike and
    # rarely flips the winner; signed weights make the damage visible
    net = generate_feedforward((784, 100, 10), WeightSampler.parse("uniform:-1:1:sqrt_fanin"), seed=0)
    cfg = PipelineConfig(layers=(784, 100, 10), crossbar_n=128)
    rep, _, _ = compare_network(net, random_batch(net, 16, 0), cfg)
    assert rep.baseline["argmax_match_rate"] < 1.0
    assert rep.proposed["argmax_match_rate"] == 1.0


def test_report_serialization_is_canonical():
    rep, base, prop = fixture_report()
    text = serialize_report(rep)
    assert text == serialize_report(fixture_report()[0])
    doc = json.loads(text)
    assert list(doc) == sorted(doc)
    csv_text = crossbar_rows_csv({"baseline": base, "proposed": prop})
    assert csv_text.splitlines()[0].startswith("variant,crossbar")
    assert len(csv_text.splitlines()) == 1 + base.crossbar_count + prop.crossbar_count


def test_argmax_match_rate():
    ref = np.array([[1.0, 2.0], [3.0, 1.0]])
    assert argmax_match_rate(ref, ref) == 1.0
    assert argmax_match_rate(ref, ref[:, ::-1]) == 0.0


@given(st.integers(2, 16), st.integers(1, 5), st.data())
def test_wasted_energy_nonincreasing_in_synapse_util(n, count, data):
    outputs = [data.draw(st.integers(0, n)) for _ in range(count)]
    cells_a = [data.draw(st.integers(0, n * n)) for _ in range(count)]
    cells_b = [data.draw(st.integers(c, n * n)) for c in cells_a]

    def mapping(cells):
        xbs = tuple(Crossbar(i, tuple(range(100 * i, 100 * i + o)), (), c)
                    for i, (o, c) in enumerate(zip(outputs, cells)))
        return Mapping("proposed", n, xbs, {}, {}, {})

    a, b = mapping(cells_a), mapping(cells_b)
    assert utilization(b).synapse_util >= utilization(a).synapse_util
    assert wasted_energy(b) <= wasted_energy(a)
