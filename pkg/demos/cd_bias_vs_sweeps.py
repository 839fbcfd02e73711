"""How far is CD-k from the maximum-likelihood gradient?

On a 3-unit Boltzmann machine everything can be enumerated, so we compare
three things side by side for k = 1, 5, 50 Gibbs sweeps:

* the exact gradient of KL(P0 || P_theta),
* the exact *expected* CD-k update (chains started at the data and pushed
  through the exact k-sweep kernel matrix),
* a Monte-Carlo CD-k estimate from 20000 chains.

The exact bias shrinks geometrically with k, while the Monte-Carlo noise
stays flat. Beyond a handful of sweeps the bias is far below the
sampling noise, so a finite-chain error is no longer ordered by k.

Run: python demos/cd_bias_vs_sweeps.py
"""
import numpy as np

from fedcdl.cdtheory import (
    DiscreteEnergyModel,
    EmpiricalDistribution,
    TransitionKernel,
    all_states,
    cd_k_gradient,
    exact_ml_gradient,
    kernel_matrix,
)

rng = np.random.default_rng(0)
model = DiscreteEnergyModel.random(3, rng)
states = all_states(3)
data = EmpiricalDistribution(states, rng.dirichlet(np.ones(len(states))))
exact = exact_ml_gradient(model, data)
print("exact ML gradient:", np.round(exact, 4))

grad_e = model.energy_grad(states)
print(f"\n{'sweeps':>6} {'exact bias':>12} {'MC error':>10} {'MC stderr':>10}")
for k in (1, 5, 50):
    # expected CD-k: E_{x0 ~ P0, xk ~ K^k(x0, .)}[dE(x0) - dE(xk)]
    end_dist = data.probs @ kernel_matrix(model, k)
    expected = data.probs @ grad_e - end_dist @ grad_e
    est, se = cd_k_gradient(model, data, TransitionKernel(k, seed=1), chains=20000, return_stderr=True)
    print(f"{k:6d} {np.linalg.norm(expected - exact):12.3e} "
          f"{np.linalg.norm(est - exact):10.3e} {np.linalg.norm(se):10.3e}")

# the zero-sweep estimator is exactly zero: both expectations see the same chains
print("\nCD-0:", cd_k_gradient(model, data, TransitionKernel(0, seed=1), chains=1000))
