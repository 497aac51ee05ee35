"""
Recurrent reservoirs and the rate fixed point
=============================================

Reservoirs contain cycles, so their steady-state rates come from an
iterative solve. Unrolling adds chain units inside the loops; the
decomposed network must land on the same fixed point once its outputs are
scaled back.
"""

# %%
import numpy as np

from fitmap.core import WeightSampler, generate_reservoir
from fitmap.pipeline import PipelineConfig, build_proposed
from fitmap.ratesim import SimConfig, random_batch, simulate_batch

sampler = WeightSampler("uniform", -1.0, 1.0, "sqrt_fanin")
net = generate_reservoir(30, 0.3, seed=4, weight_sampler=sampler, num_inputs=3, num_outputs=3)
batch = random_batch(net, 8, seed=4)
sim = SimConfig(saturate=False, convergence_tol=1e-12)

ref = simulate_batch(net, batch, sim)
print("original: converged", ref.converged, "after", ref.iterations, "sweeps")

# %%
cfg = PipelineConfig(reservoir=(30, 0.3), convergence_tol=1e-12)
fit, sub = build_proposed(net, batch, cfg)
print("units after unrolling:", fit.num_units, "after recombining:", sub.num_units)

# %%
outs = net.output_ids
scale = np.array([sub.scale[i] for i in outs])[:, None]
got = simulate_batch(sub.to_network(), batch, sim)
err = np.abs(got.rows(outs) * scale - ref.rows(outs)).max()
print("decomposed: converged", got.converged, "after", got.iterations, "sweeps, max abs error", err)
