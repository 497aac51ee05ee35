import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fitmap.core import INPUT, OUTPUT, Network, NetworkValidationError, Neuron, WeightSampler, generate_feedforward
from fitmap.decompose import recombine, unroll_network
from fitmap.ingest import (NetworkFormatError, parse_network, parse_rates, parse_unit_network, prune_weights,
                           read_network, serialize_network, serialize_rates, serialize_unit_network,
                           write_network)

from helpers import random_network


def two_neuron():
    return Network.from_synapses([Neuron(0, INPUT), Neuron(1, OUTPUT, threshold=0.5, r_max=200.0)],
                                 [(0, 1, 0.75)], {"name": "tiny"})


def test_round_trip_two_neurons():
    net = two_neuron()
    assert parse_network(serialize_network(net)) == net
    assert parse_network(serialize_network(net).encode()) == net


def test_serialize_is_canonical():
    net = random_network(11)
    text = serialize_network(net)
    assert serialize_network(net) == text
    shuffled = Network(tuple(reversed(net.neurons)), net.src[::-1], net.dst[::-1], net.weight[::-1], net.metadata)
    assert serialize_network(shuffled) == text


def test_unknown_version():
    doc = json.loads(serialize_network(two_neuron()))
    doc["version"] = 2
    with pytest.raises(NetworkFormatError, match="unknown version"):
        parse_network(json.dumps(doc))


def test_duplicate_synapse_names_pair():
    doc = json.loads(serialize_network(two_neuron()))
    doc["synapses"].append({"src": 0, "dst": 1, "w": 0.1})
    with pytest.raises(NetworkValidationError, match=r"parallel synapse \(0, 1\)"):
        parse_network(json.dumps(doc))


def test_syntax_error_reports_position():
    with pytest.raises(NetworkFormatError) as exc:
        parse_network('{\n  "version": 1,\n  oops\n}')
    assert exc.value.line == 3


def test_malformed_records():
    with pytest.raises(NetworkFormatError):
        parse_network('{"version": 1, "neurons": [{"id": 0}], "synapses": []}')
    with pytest.raises(NetworkFormatError):
        parse_network("[1, 2]")


def test_large_network_round_trip(tmp_path):
    net = generate_feedforward((784, 100, 10), seed=3)
    path = tmp_path / "mnist.snn.json"
    write_network(net, path)
    back = read_network(path)
    assert back.num_synapses == 79_400
    assert back == net


def test_prune_epsilon_zero_is_identity():
    net = random_network(5)
    res = prune_weights(net, 0.0)
    assert res.removed_count == 0
    assert res.network == net


def test_prune_tiny_weight():
    net = Network.from_synapses([Neuron(0, INPUT), Neuron(1, OUTPUT)], [(0, 1, 1e-9)])
    res = prune_weights(net, 1e-6)
    assert res.removed_count == 1
    assert res.network.metadata["orphaned"] == "1"
    assert [n.id for n in res.network.neurons] == [0, 1]


def test_prune_count_matches_binomial_expectation():
    # P(|w| < 0.1) for w ~ U[-1, 1] is 0.1
    net = generate_feedforward((200, 100), WeightSampler("uniform", -1.0, 1.0), seed=9)
    n = net.num_synapses
    p = 0.1
    res = prune_weights(net, 0.1)
    assert abs(res.removed_count - p * n) <= 3 * math.sqrt(n * p * (1 - p))


def test_prune_rejects_negative_epsilon():
    with pytest.raises(ValueError):
        prune_weights(two_neuron(), -1.0)


@given(st.integers(0, 5000), st.floats(0.0, 1.0))
def test_prune_idempotent_and_fanin_monotone(seed, eps):
    net = random_network(seed, recurrent=seed % 2 == 1)
    once = prune_weights(net, eps).network
    again = prune_weights(once, eps)
    assert again.removed_count == 0
    before, after = net.fanin(), once.fanin()
    assert all(after[v] <= before[v] for v in before)
    assert np.all(np.abs(once.weight) >= eps)


@given(st.integers(0, 5000), st.booleans())
def test_round_trip_property(seed, recurrent):
    net = random_network(seed, recurrent=recurrent)
    assert parse_network(serialize_network(net)) == net


def test_rates_round_trip():
    batch = [{0: 1.5, 1: 0.0}, {0: 2.0, 1: 3.25}]
    assert parse_rates(serialize_rates(batch)) == batch
    with pytest.raises(NetworkFormatError):
        parse_rates('{"version": 1, "rates": [{"name": "x"}]}')


@given(st.integers(0, 2000), st.integers(2, 6))
def test_unit_network_round_trip(seed, max_fanin):
    net = random_network(seed)
    unet = recombine(unroll_network(net), max_fanin)
    back = parse_unit_network(serialize_unit_network(unet), net)
    assert back.units == unet.units
    assert back.final_unit == unet.final_unit
    assert back.scale == unet.scale
    assert back.max_fanin == max_fanin


def test_unit_network_rejects_plain_file():
    with pytest.raises(NetworkFormatError, match="not a decomposed"):
        parse_unit_network(serialize_network(two_neuron()))
