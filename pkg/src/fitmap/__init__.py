"""Resource-aware mapping of rate-coded spiking networks onto fixed-size crossbars."""

__version__ = "0.1.0"

from .core import (HIDDEN, INPUT, OUTPUT, FitmapError, Network, NetworkValidationError, Neuron, Synapse,
                   Violation, WeightSampler, check_network, fanin_stats, generate_feedforward,
                   generate_reservoir, shared_input_example, validate_network)
from .decompose import (NothingToUnroll, Unit, UnitNetwork, check_units, fit_unit_count, realized_unit_count,
                        recombine, unroll_network, unroll_neuron)
from .ingest import (NetworkFormatError, parse_network, parse_rates, parse_unit_network, prune_weights,
                     read_network, serialize_network, serialize_rates, serialize_unit_network, write_network)
from .mapper import (CapacityError, CrossbarSpec, InstanceTooLarge, Mapping, map_baseline, optimal_pack,
                     pack_proposed, parse_mapping, serialize_mapping, truncate_fanin, verify_mapping)
from .metrics import (CompareReport, EnergyModel, compare_report, interconnect_energy, utilization,
                      wasted_energy)
from .normalize import apply_normalization, collect_activation_stats, normalization_factors
from .ratesim import ConvergenceError, SimConfig, neuron_transfer, simulate, simulate_batch
