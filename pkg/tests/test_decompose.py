from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fitmap.core import INPUT, OUTPUT, Network, Neuron, generate_feedforward, generate_reservoir, \
    shared_input_example
from fitmap.decompose import (NothingToUnroll, check_units, fit_unit_count, realized_unit_count, recombine,
                              unroll_network, unroll_neuron)
from fitmap.ratesim import SimConfig, random_batch, simulate_batch

from helpers import random_network

LINEAR = SimConfig(saturate=False, convergence_tol=1e-13)


def fanin_net(*fanins, weights=None):
    """Inputs 0..max-1 feeding one output neuron per requested fanin."""
    k = max(fanins)
    neurons = [Neuron(i, INPUT) for i in range(k)]
    syn = []
    for j, m in enumerate(fanins):
        nid = k + j
        neurons.append(Neuron(nid, OUTPUT))
        ws = weights or [0.1 * (i + 1) for i in range(m)]
        syn.extend((i, nid, ws[i]) for i in range(m))
    return Network.from_synapses(neurons, syn)


def test_fanin_three_chain():
    net = fanin_net(3, weights=[0.3, 0.2, 0.1])
    units = unroll_neuron(net, 3)
    assert len(units) == 2
    u1, u2 = units
    assert [(i.source, i.weight) for i in u1.inputs] == [(0, 0.3), (1, 0.2)]
    assert [(i.source, i.weight, i.chain) for i in u2.inputs] == [(u1.id, 1.0, True), (2, 0.1, False)]
    assert u2.id == 3 and u1.successor == 3
    assert u1.threshold == 0.0 and u1.gain == 1.0


def test_unit_counts_for_fanins():
    net = fanin_net(5, 4)
    assert len(unroll_neuron(net, 5)) == 4
    assert len(unroll_neuron(net, 6)) == 3
    assert unroll_network(net).num_units == 7
    assert fit_unit_count(net) == 7
    assert len(unroll_neuron(fanin_net(2), 2)) == 1
    assert fit_unit_count(fanin_net(2)) == 1


def test_fanin_one_raises_and_passes_through():
    net = fanin_net(1)
    with pytest.raises(NothingToUnroll):
        unroll_neuron(net, 1)
    unet = unroll_network(net)
    assert unet.num_units == 1
    assert fit_unit_count(net) == 0 and realized_unit_count(net) == 1


def test_fixture_units():
    net = shared_input_example()
    unet = unroll_network(net)
    assert len(unet.chain(7)) == 4 and len(unet.chain(8)) == 3 and len(unet.chain(6)) == 1
    assert unet.num_units == 8 == fit_unit_count(net)
    assert check_units(unet) == []


def test_mnist_unit_count():
    net = generate_feedforward((784, 100, 10), seed=0)
    assert fit_unit_count(net) == 100 * 783 + 10 * 99 == 79_290
    assert realized_unit_count(net) == 79_290


def test_all_fanin_two_is_isomorphic():
    net = fanin_net(2, 2, 1)
    unet = unroll_network(net)
    assert unet.to_network() == Network(net.neurons, net.src, net.dst, net.weight, {"decomposed": "true",
                                                                                    "name": "",
                                                                                    "max_fanin": "2"})


def test_recombine_fanin_five_into_four():
    net = fanin_net(5)
    sub = recombine(unroll_network(net), 4)
    chain = sub.chain(5)
    assert [u.fanin for u in chain] == [4, 2]
    assert [len(u.external) for u in chain] == [4, 1]
    assert chain[1].chain_input.source == chain[0].id


def test_recombine_fanin_two_is_identity():
    unet = unroll_network(shared_input_example())
    assert recombine(unet, 2).units == unet.units


def test_recombine_fanin_784():
    net = fanin_net(784, weights=list(np.linspace(0.01, 1.0, 784)))
    sub = recombine(unroll_network(net), 128)
    chain = sub.chain(784)
    assert len(chain) == 7
    assert [len(u.external) for u in chain] == [128] + [127] * 5 + [21]
    assert check_units(sub) == []


def test_recombine_rejects_bad_inputs():
    unet = unroll_network(fanin_net(4))
    with pytest.raises(ValueError):
        recombine(unet, 1)
    with pytest.raises(ValueError):
        recombine(recombine(unet, 3), 3)


def test_reservoir_cycle_neuron():
    # neurons 3 and 4 form a cycle; 3 has fanin 4
    neurons = [Neuron(0, INPUT), Neuron(1, INPUT), Neuron(2, INPUT), Neuron(3), Neuron(4, OUTPUT)]
    net = Network.from_synapses(neurons, [(0, 3, 0.3), (1, 3, 0.2), (2, 3, 0.1), (4, 3, 0.4),
                                          (3, 4, 0.5), (0, 4, 0.2)])
    unet = unroll_network(net)
    chain = unet.chain(3)
    assert len(chain) == 3 and chain[-1].id == 3
    # neuron 4 still reads 3, which is now the final unit of the chain
    assert any(i.source == 3 for i in unet.units[4].inputs)
    batch = random_batch(net, 4, seed=0)
    ref = simulate_batch(net, batch, LINEAR).rows([3, 4])
    got = simulate_batch(unet.to_network(), batch, LINEAR).rows([3, 4])
    assert np.allclose(got, ref, rtol=1e-9, atol=0)


def external_multiset(net):
    out = {}
    for s, d, w in net.synapses():
        out.setdefault(d, Counter())[(s, w)] += 1
    return out


@given(st.integers(0, 10_000), st.booleans(), st.integers(2, 9))
def test_conservation_and_counts(seed, recurrent, max_fanin):
    net = random_network(seed, recurrent=recurrent)
    unet = unroll_network(net)
    fanin = net.fanin()
    expected = external_multiset(net)
    for stage in (unet, recombine(unet, max_fanin)):
        got = stage.external_multiset()
        for nid in unet.final_unit:
            assert got.get(nid, Counter()) == expected.get(nid, Counter())
        assert check_units(stage) == []
        assert all(u.fanin <= stage.max_fanin for u in stage.units.values())
    for nid, chain in unet.chains().items():
        if fanin[nid] >= 2:
            assert len(chain) == fanin[nid] - 1
    if all(m >= 2 for v, m in fanin.items() if v not in net.input_ids):
        assert fit_unit_count(net) == unet.num_units


@given(st.integers(0, 10_000), st.booleans())
def test_unrolled_simulation_is_exact(seed, recurrent):
    net = random_network(seed, recurrent=recurrent)
    unet = unroll_network(net)
    batch = random_batch(net, 3, seed)
    ids = [n.id for n in net.neurons if n.kind != INPUT]
    ref = simulate_batch(net, batch, LINEAR).rows(ids)
    got = simulate_batch(unet.to_network(), batch, LINEAR).rows(ids)
    assert np.allclose(got, ref, rtol=1e-9, atol=1e-9)


@given(st.integers(0, 10_000))
def test_wide_recombine_restores_neurons(seed):
    net = random_network(seed)
    sub = recombine(unroll_network(net), max(max(net.fanin().values()), 2))
    for nid, chain in sub.chains().items():
        assert len(chain) == 1
        u = chain[0]
        assert u.id == nid
        assert sorted((i.source, i.weight) for i in u.inputs) == sorted(
            (s, w) for s, d, w in net.synapses() if d == nid)


def test_chain_ids_are_fresh_and_deterministic():
    net = generate_reservoir(12, 0.5, seed=1)
    a, b = unroll_network(net), unroll_network(net)
    assert a.units == b.units
    top = max(n.id for n in net.neurons)
    fresh = [u.id for u in a.units.values() if u.id != u.origin]
    assert all(i > top for i in fresh)
    assert len(set(fresh)) == len(fresh)
