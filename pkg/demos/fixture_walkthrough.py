"""
Packing the shared-input fixture
================================

Three output neurons read from overlapping input sets. On 4x4 crossbars the
one-neuron-per-column baseline needs three crossbars and still drops a
synapse, because one neuron has five inputs. Unrolling each neuron into a
chain of small units and packing units with shared rows fits everything
into two crossbars.
"""

# %%
from fitmap.core import shared_input_example
from fitmap.decompose import recombine, unroll_network
from fitmap.mapper import CrossbarSpec, map_baseline, pack_proposed, verify_mapping
from fitmap.pipeline import default_max_fanin

net = shared_input_example()
for nid, m in sorted(net.fanin().items()):
    print(f"neuron {nid}: fan-in {m}")

# %%
# Baseline: each neuron gets a column, inputs beyond n are truncated by
# magnitude.
spec = CrossbarSpec(4)
base = map_baseline(net, spec)
print("baseline crossbars:", base.crossbar_count, "dropped:", base.dropped)

# %%
# Proposed: unroll into two-input units, then merge consecutive stages up to
# the fan-in limit before packing.
units = recombine(unroll_network(net), default_max_fanin(4))
prop = pack_proposed(units, spec)
print("proposed crossbars:", prop.crossbar_count, "dropped:", len(prop.dropped))
for xb in prop.crossbars:
    print(f"  crossbar {xb.index}: rows {list(xb.rows)} -> units {list(xb.units)}")

# %%
# Both mappings pass the structural checker.
print(verify_mapping(base, net, spec), verify_mapping(prop, units, spec))
