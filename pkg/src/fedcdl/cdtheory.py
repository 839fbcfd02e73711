"""Exact and Monte-Carlo contrastive-divergence gradients on tiny Boltzmann machines.

The model is a fully visible Boltzmann machine over ``n`` binary units,

    E(x; theta) = -sum_i b_i x_i - sum_{i<j} w_ij x_i x_j,

so ``dE/dtheta = -phi(x)`` with ``phi(x) = (x, [x_i x_j]_{i<j})``. For
``n <= 12`` every quantity can be enumerated, which makes these models
exact oracles for the sampling-based CD-k estimator.

Sign convention: every "gradient" here is the gradient of
``KL(P0 || P_theta)`` with respect to theta, i.e. the descent direction is
its negative.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, logsumexp

__all__ = [
    "MAX_ENUMERABLE",
    "MAX_KERNEL_MATRIX",
    "DiscreteEnergyModel",
    "TransitionKernel",
    "EmpiricalDistribution",
    "all_states",
    "partition_function",
    "log_partition",
    "model_distribution",
    "exact_ml_gradient",
    "cd_k_gradient",
    "cd_negative_gradient",
    "convergence_g",
    "kernel_matrix",
    "check_k1_condition",
    "diagnostic_rows",
    "oracle_checks",
    "write_report",
]

MAX_ENUMERABLE = 12
MAX_KERNEL_MATRIX = 4


def all_states(n: int) -> np.ndarray:
    """All ``2**n`` binary states, row ``s`` is the binary expansion of ``s`` (MSB first)."""
    return np.array(list(product((0.0, 1.0), repeat=n)))


@dataclass(frozen=True)
class DiscreteEnergyModel:
    """Biases ``theta[:n]`` followed by couplings ``w_ij`` for ``i < j`` in row-major order."""

    n: int
    theta: np.ndarray

    def __post_init__(self):
        if not 1 <= self.n <= MAX_ENUMERABLE:
            raise ValueError(f"variable count must be in [1, {MAX_ENUMERABLE}], got {self.n}")
        theta = np.array(self.theta, dtype=np.float64).ravel()
        if theta.shape != (self.dim(self.n),):
            raise ValueError(f"theta must have {self.dim(self.n)} entries for n={self.n}")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @staticmethod
    def dim(n: int) -> int:
        return n + n * (n - 1) // 2

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, scale: float = 2.0) -> "DiscreteEnergyModel":
        return cls(n, rng.uniform(-scale, scale, size=cls.dim(n)))

    def with_theta(self, theta) -> "DiscreteEnergyModel":
        return DiscreteEnergyModel(self.n, theta)

    @property
    def biases(self) -> np.ndarray:
        return self.theta[: self.n]

    @property
    def couplings(self) -> np.ndarray:
        """Symmetric ``n x n`` coupling matrix with zero diagonal."""
        w = np.zeros((self.n, self.n))
        iu = np.triu_indices(self.n, k=1)
        w[iu] = self.theta[self.n:]
        return w + w.T

    def features(self, x: np.ndarray) -> np.ndarray:
        """``phi(x)`` for one state or a batch of states (last axis = units)."""
        x = np.asarray(x, dtype=np.float64)
        iu = np.triu_indices(self.n, k=1)
        pairs = x[..., iu[0]] * x[..., iu[1]]
        return np.concatenate([x, pairs], axis=-1)

    def energy_grad(self, x: np.ndarray) -> np.ndarray:
        """``dE/dtheta`` at state(s) ``x``."""
        return -self.features(x)

    def energy(self, x: np.ndarray) -> np.ndarray:
        return -(self.features(x) @ self.theta)


@dataclass(frozen=True)
class TransitionKernel:
    """``sweeps`` full single-site Gibbs sweeps (units visited in order 0..n-1)."""

    sweeps: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.sweeps < 0:
            raise ValueError("sweeps must be non-negative")


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Weighted support over binary states."""

    states: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        states = np.atleast_2d(np.array(self.states, dtype=np.float64))
        probs = np.array(self.probs, dtype=np.float64).ravel()
        if states.shape[0] != probs.shape[0]:
            raise ValueError("one probability per state is required")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be non-negative and sum to 1")
        if not np.all((states == 0.0) | (states == 1.0)):
            raise ValueError("states must be binary")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> "EmpiricalDistribution":
        uniq, counts = np.unique(np.atleast_2d(samples), axis=0, return_counts=True)
        return cls(uniq, counts / counts.sum())

    @classmethod
    def from_model(cls, model: DiscreteEnergyModel) -> "EmpiricalDistribution":
        return cls(all_states(model.n), model_distribution(model))

    def expect(self, values: np.ndarray) -> np.ndarray:
        return self.probs @ values

    def sample(self, uniforms: np.ndarray) -> np.ndarray:
        """Inverse-CDF draws, one state per uniform."""
        cdf = np.cumsum(self.probs)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, uniforms, side="right")
        return self.states[np.minimum(idx, len(self.probs) - 1)]


def _require_enumerable(model: DiscreteEnergyModel, limit: int = MAX_ENUMERABLE):
    if model.n > limit:
        raise ValueError(f"n={model.n} exceeds the enumeration limit {limit}")


def log_partition(model: DiscreteEnergyModel) -> float:
    _require_enumerable(model)
    return float(logsumexp(-model.energy(all_states(model.n))))


def partition_function(model: DiscreteEnergyModel) -> float:
    """``Z = sum_x exp(-E(x))`` by exhaustive enumeration."""
    return float(np.exp(log_partition(model)))


def model_distribution(model: DiscreteEnergyModel) -> np.ndarray:
    """Boltzmann probabilities over :func:`all_states` order."""
    _require_enumerable(model)
    neg_e = -model.energy(all_states(model.n))
    return np.exp(neg_e - logsumexp(neg_e))


def exact_ml_gradient(model: DiscreteEnergyModel, data: EmpiricalDistribution) -> np.ndarray:
    """``grad KL(P0 || P_theta) = E_P0[dE/dtheta] - E_P_theta[dE/dtheta]``."""
    _require_enumerable(model)
    states = all_states(model.n)
    return data.expect(model.energy_grad(data.states)) - model_distribution(model) @ model.energy_grad(states)


# -- sampling ----------------------------------------------------------------

def _chain_uniforms(seed: int, chains: int, per_chain: int) -> np.ndarray:
    # Row c is a fixed slice of one PCG64 stream, so chain c's randomness is a
    # function of (seed, c) only; any worker could reproduce it by jump-ahead.
    return np.random.default_rng(seed).random((chains, per_chain))


def _gibbs(model: DiscreteEnergyModel, x: np.ndarray, uniforms: np.ndarray, sweeps: int) -> np.ndarray:
    """Run ``sweeps`` Gibbs sweeps on every row of ``x`` in place."""
    b, w = model.biases, model.couplings
    n = model.n
    for s in range(sweeps):
        for i in range(n):
            p_on = expit(b[i] + x @ w[:, i])
            x[:, i] = (uniforms[:, s * n + i] < p_on).astype(np.float64)
    return x


def _cd_estimate(
    model: DiscreteEnergyModel,
    data: EmpiricalDistribution,
    kernel: TransitionKernel,
    chains: int,
) -> Tuple[np.ndarray, np.ndarray]:
    if chains < 1:
        raise ValueError("chains must be >= 1")
    n = model.n
    u = _chain_uniforms(kernel.seed, chains, 1 + kernel.sweeps * n)
    x0 = data.sample(u[:, 0])
    xk = _gibbs(model, x0.copy(), u[:, 1:], kernel.sweeps)
    # per-chain difference of the data and chain-end energy gradients
    diff = model.energy_grad(x0) - model.energy_grad(xk)
    grad = diff.mean(axis=0)
    stderr = diff.std(axis=0, ddof=1) / np.sqrt(chains) if chains > 1 else np.full(grad.shape, np.inf)
    return grad, stderr


def cd_k_gradient(
    model: DiscreteEnergyModel,
    data: EmpiricalDistribution,
    kernel: TransitionKernel = TransitionKernel(),
    chains: int = 1000,
    return_stderr: bool = False,
):
    """CD-k estimate of :func:`exact_ml_gradient`.

    Chains start at draws from ``data`` and run ``kernel.sweeps`` Gibbs
    sweeps under ``model``. Both expectations use the same chains, so with
    zero sweeps the estimate is exactly zero.

    Returns the gradient, or ``(gradient, stderr)`` when ``return_stderr``.
    """
    grad, stderr = _cd_estimate(model, data, kernel, chains)
    return (grad, stderr) if return_stderr else grad


def cd_negative_gradient(
    model_s: DiscreteEnergyModel,
    model_b: DiscreteEnergyModel,
    data: Optional[EmpiricalDistribution] = None,
    kernel: TransitionKernel = TransitionKernel(),
    chains: int = 1000,
    return_stderr: bool = False,
):
    """CD-k gradient for the sub-network parameters.

    The roles are mirrored relative to :func:`cd_k_gradient`: chains start
    from the backbone's distribution and run under ``model_s``. When
    ``data`` is given it stands in for the backbone distribution (e.g. an
    empirical sample of it); otherwise the exact ``P(x | model_b)`` is used.
    """
    if model_s.n != model_b.n:
        raise ValueError("both models must have the same variable count")
    start = EmpiricalDistribution.from_model(model_b) if data is None else data
    return cd_k_gradient(model_s, start, kernel, chains, return_stderr)


# -- convergence diagnostics -------------------------------------------------

def convergence_g(model: DiscreteEnergyModel, state, data: EmpiricalDistribution) -> np.ndarray:
    """Centered energy gradient ``dE/dtheta(x) - E_P0[dE/dtheta]``.

    ``state`` may be a single state or a batch of states.
    """
    _require_enumerable(model)
    return model.energy_grad(state) - data.expect(model.energy_grad(data.states))


def _site_kernel(model: DiscreteEnergyModel, i: int, states: np.ndarray, index: dict) -> np.ndarray:
    size = len(states)
    k = np.zeros((size, size))
    b, w = model.biases, model.couplings
    for s, x in enumerate(states):
        p_on = expit(b[i] + x @ w[:, i])
        on, off = x.copy(), x.copy()
        on[i], off[i] = 1.0, 0.0
        k[s, index[tuple(on)]] += p_on
        k[s, index[tuple(off)]] += 1.0 - p_on
    return k


def kernel_matrix(model: DiscreteEnergyModel, sweeps: int = 1) -> np.ndarray:
    """Exact ``2**n x 2**n`` transition matrix of ``sweeps`` Gibbs sweeps.

    Rows index the current state, columns the next, both in
    :func:`all_states` order.
    """
    if model.n > MAX_KERNEL_MATRIX:
        raise ValueError(f"exact kernel matrix is limited to n <= {MAX_KERNEL_MATRIX}, got n={model.n}")
    states = all_states(model.n)
    index = {tuple(x): s for s, x in enumerate(states)}
    sweep = np.eye(len(states))
    for i in range(model.n):
        sweep = sweep @ _site_kernel(model, i, states, index)
    return np.linalg.matrix_power(sweep, sweeps)


def _k1_lhs(model, theta, theta_star, data, sweeps, states):
    probe = model.with_theta(theta)
    k = kernel_matrix(probe, sweeps)
    p0 = np.zeros(len(states))
    index = {tuple(x): s for s, x in enumerate(states)}
    for x, p in zip(data.states, data.probs):
        p0[index[tuple(x)]] += p
    g_probe = convergence_g(probe, states, data)
    g_star = convergence_g(model.with_theta(theta_star), states, data)
    bracket = p0 @ g_probe - (p0 @ k) @ g_star
    delta = theta - theta_star
    return float(delta @ bracket)


def check_k1_condition(
    model: DiscreteEnergyModel,
    theta_star,
    kernel: TransitionKernel = TransitionKernel(),
    probe_count: int = 32,
    radius: float = 0.1,
    data: Optional[EmpiricalDistribution] = None,
) -> Tuple[float, bool]:
    """Empirical strong-monotonicity constant of the expected CD update around ``theta_star``.

    Probes ``theta = theta_star + radius * u`` for random unit directions
    ``u`` and evaluates

        (theta - theta*) . (sum_x P0(x) g(x, theta)
                            - sum_{x', x} P0(x') K(x', x) g(x, theta*))

    divided by ``|theta - theta*|**2`` using the exact kernel matrix ``K``.
    ``data`` defaults to the exact distribution at ``theta_star``. Probes
    that coincide with ``theta_star`` are skipped.

    Returns ``(min_ratio, min_ratio > 0)``.
    """
    if model.n > MAX_KERNEL_MATRIX:
        raise ValueError(f"check_k1_condition needs an exact kernel, n <= {MAX_KERNEL_MATRIX}")
    theta_star = np.asarray(theta_star, dtype=np.float64)
    if data is None:
        data = EmpiricalDistribution.from_model(model.with_theta(theta_star))
    states = all_states(model.n)
    rng = np.random.default_rng(kernel.seed)
    directions = rng.standard_normal((probe_count, theta_star.size))
    ratios = []
    for u in directions:
        norm = np.linalg.norm(u)
        if norm == 0.0 or radius == 0.0:
            continue
        theta = theta_star + radius * u / norm
        dist2 = float(np.sum((theta - theta_star) ** 2))
        if dist2 == 0.0:
            continue
        ratios.append(_k1_lhs(model, theta, theta_star, data, kernel.sweeps, states) / dist2)
    if not ratios:
        raise ValueError("no non-degenerate probes")
    min_ratio = float(min(ratios))
    return min_ratio, min_ratio > 0.0


# -- report ------------------------------------------------------------------

REPORT_COLUMNS = ("sweeps", "chains", "grad_error_l2", "stderr", "k1_estimate")


@dataclass
class DiagnosticRow:
    sweeps: int
    chains: int
    grad_error_l2: float
    stderr: float
    k1_estimate: float
    max_z: float
    exact_norm: float = float("nan")


def diagnostic_rows(
    sweep_list: Sequence[int] = (0, 1, 5, 50),
    n: int = 3,
    chains: int = 20000,
    seed: int = 0,
) -> List[DiagnosticRow]:
    """One row per sweep count on a random ``n``-unit model and random data.

    ``stderr`` is the L2 norm of the per-coordinate standard errors and
    ``max_z`` the largest ``|error| / stderr`` over coordinates. The k1 column
    uses a 2-unit model with data from its own distribution.
    """
    rng = np.random.default_rng(seed)
    model = DiscreteEnergyModel.random(n, rng)
    data = EmpiricalDistribution(all_states(n), rng.dirichlet(np.ones(2 ** n)))
    exact = exact_ml_gradient(model, data)
    small = DiscreteEnergyModel.random(2, rng)
    rows = []
    for sweeps in sweep_list:
        kernel = TransitionKernel(sweeps=sweeps, seed=seed + 1)
        grad, se = cd_k_gradient(model, data, kernel, chains, return_stderr=True)
        err = grad - exact
        with np.errstate(divide="ignore", invalid="ignore"):
            z = np.where(se > 0, np.abs(err) / se, np.where(err == 0, 0.0, np.inf))
        k1 = check_k1_condition(small, small.theta, kernel)[0] if sweeps > 0 else 0.0
        rows.append(
            DiagnosticRow(
                sweeps, chains, float(np.linalg.norm(err)), float(np.linalg.norm(se)), k1, float(z.max()),
                float(np.linalg.norm(exact)),
            )
        )
    return rows


def oracle_checks(rows: Sequence[DiagnosticRow], seed: int = 0, z_limit: float = 3.0) -> List[Tuple[str, bool, float]]:
    """``(name, passed, worst_delta)`` for each self-check of the estimator suite."""
    checks = []
    rng = np.random.default_rng(seed)
    model = DiscreteEnergyModel.random(3, rng)
    data = EmpiricalDistribution(all_states(3), rng.dirichlet(np.ones(8)))
    mean_g = data.probs @ convergence_g(model, data.states, data)
    worst = float(np.abs(mean_g).max())
    checks.append(("data_mean_of_g_is_zero", worst <= 1e-12, worst))
    for r in rows:
        if r.sweeps == 0:
            delta = abs(r.grad_error_l2 - r.exact_norm)
            checks.append(("zero_sweeps_estimator_is_zero", delta <= 1e-12 and r.stderr == 0.0, delta))
        else:
            checks.append((f"k1_condition_sweeps_{r.sweeps}", r.k1_estimate > 0.0, r.k1_estimate))
    longest = max(rows, key=lambda r: r.sweeps)
    if longest.sweeps > 0:
        checks.append((f"unbiased_within_{z_limit:g}_stderr_sweeps_{longest.sweeps}", longest.max_z <= z_limit, longest.max_z))
    return checks


def write_report(rows: Sequence[DiagnosticRow], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in rows:
            writer.writerow([r.sweeps, r.chains, repr(r.grad_error_l2), repr(r.stderr), repr(r.k1_estimate)])
