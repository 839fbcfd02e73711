"""A tour of the bundled silo networks.

For each graph we build the Metropolis-Hastings consensus matrix, check it is
doubly stochastic, and look at the spectral gap (how fast gossip mixes) and
the estimated wall-clock time of one round under decentralized (DFL) and
server-based (SFL) aggregation.

Run: python demos/topology_tour.py
"""
import numpy as np

from fedcdl.model import NetConfig, init_net, params_to_bytes
from fedcdl.topology import (
    build_consensus_matrix,
    builtin_topology,
    cycle_time_estimate,
    is_doubly_stochastic,
    ring,
    spectral_gap,
)

model_bytes = len(params_to_bytes(init_net(NetConfig(), 0)))
print(f"model payload: {model_bytes} bytes\n")
print(f"{'graph':>10} {'N':>4} {'edges':>6} {'gap':>9} {'DFL ms':>9} {'SFL ms':>9}")

for g in [builtin_topology(n) for n in ("gaia11", "nws22", "exodus79")] + [ring(11)]:
    a = build_consensus_matrix(g)
    assert is_doubly_stochastic(a)
    dfl = cycle_time_estimate(g, model_bytes, 50.0, "DFL")
    sfl = cycle_time_estimate(g, model_bytes, 50.0, "SFL")
    print(f"{g.name:>10} {g.n:4d} {len(g.edges):6d} {spectral_gap(a):9.5f} {dfl:9.1f} {sfl:9.1f}")

# gossip keeps the network average fixed while pulling silos together
g = builtin_topology("gaia11")
a = build_consensus_matrix(g)
x = np.random.default_rng(0).normal(size=g.n)
for step in range(0, 201, 50):
    print(f"step {step:3d}: mean {x.mean():+.12f}  spread {x.max() - x.min():.2e}")
    x = np.linalg.matrix_power(a, 50) @ x
