import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedcdl.cdtheory import (
    DiscreteEnergyModel,
    EmpiricalDistribution,
    TransitionKernel,
    all_states,
    cd_k_gradient,
    cd_negative_gradient,
    check_k1_condition,
    convergence_g,
    diagnostic_rows,
    exact_ml_gradient,
    kernel_matrix,
    model_distribution,
    oracle_checks,
    partition_function,
    write_report,
)

ONES = EmpiricalDistribution([[1.0]], [1.0])
ZEROS = EmpiricalDistribution([[0.0]], [1.0])


def test_partition_function_closed_forms():
    assert partition_function(DiscreteEnergyModel(1, [0.0])) == pytest.approx(2.0, abs=1e-15)
    for b in (-1.3, 0.0, 0.7, 2.0):
        assert partition_function(DiscreteEnergyModel(1, [b])) == pytest.approx(1 + math.exp(b), rel=1e-14)


def test_partition_function_brute_force_n3():
    model = DiscreteEnergyModel.random(3, np.random.default_rng(0))
    w, b = model.couplings, model.biases
    z = sum(math.exp(b @ x + 0.5 * x @ w @ x) for x in all_states(3))
    assert partition_function(model) == pytest.approx(z, rel=1e-13)


@given(st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_partition_positive_and_distribution_normalized(n, seed):
    model = DiscreteEnergyModel.random(n, np.random.default_rng(seed))
    assert partition_function(model) > 0
    assert abs(model_distribution(model).sum() - 1.0) < 1e-12


def test_exact_gradient_examples():
    model = DiscreteEnergyModel(1, [0.0])
    np.testing.assert_allclose(exact_ml_gradient(model, ONES), [-0.5], atol=1e-15)
    np.testing.assert_allclose(exact_ml_gradient(model, ZEROS), [0.5], atol=1e-15)


def test_exact_gradient_vanishes_at_true_model():
    model = DiscreteEnergyModel.random(3, np.random.default_rng(4))
    data = EmpiricalDistribution.from_model(model)
    assert np.abs(exact_ml_gradient(model, data)).max() < 1e-12


def test_exact_gradient_matches_finite_difference_of_kl():
    rng = np.random.default_rng(5)
    model = DiscreteEnergyModel.random(3, rng)
    data = EmpiricalDistribution(all_states(3), rng.dirichlet(np.ones(8)))

    def kl(theta):
        q = model_distribution(model.with_theta(theta))
        return float(np.sum(data.probs * (np.log(data.probs) - np.log(q))))

    h = 1e-6
    fd = np.array([(kl(model.theta + h * e) - kl(model.theta - h * e)) / (2 * h) for e in np.eye(6)])
    np.testing.assert_allclose(exact_ml_gradient(model, data), fd, atol=1e-8)


def test_zero_sweeps_estimator_is_exactly_zero():
    model = DiscreteEnergyModel.random(3, np.random.default_rng(1))
    data = EmpiricalDistribution(all_states(3), np.full(8, 1 / 8))
    grad = cd_k_gradient(model, data, TransitionKernel(sweeps=0, seed=3), chains=100)
    assert np.all(grad == 0.0)


def test_long_chain_matches_exact_n3():
    rng = np.random.default_rng(12)
    model = DiscreteEnergyModel.random(3, rng)
    data = EmpiricalDistribution(all_states(3), rng.dirichlet(np.ones(8)))
    grad, se = cd_k_gradient(model, data, TransitionKernel(50, seed=7), 20000, return_stderr=True)
    assert np.all(np.abs(grad - exact_ml_gradient(model, data)) <= 3 * se)


def test_estimator_deterministic_for_seed():
    model = DiscreteEnergyModel.random(2, np.random.default_rng(0))
    data = EmpiricalDistribution.from_model(model)
    k = TransitionKernel(2, seed=9)
    np.testing.assert_array_equal(cd_k_gradient(model, data, k, 300), cd_k_gradient(model, data, k, 300))


def test_doubling_chains_halves_variance():
    model = DiscreteEnergyModel.random(2, np.random.default_rng(2))
    data = EmpiricalDistribution(all_states(2), [0.1, 0.2, 0.3, 0.4])

    def variance(chains):
        draws = np.array([cd_k_gradient(model, data, TransitionKernel(1, seed=s), chains) for s in range(600)])
        return draws.var(axis=0, ddof=1).sum()

    ratio = variance(200) / variance(400)
    assert abs(ratio - 2.0) <= 0.2 * 2.0


def test_negative_gradient_role_swap():
    rng = np.random.default_rng(3)
    model_s, model_b = DiscreteEnergyModel.random(2, rng), DiscreteEnergyModel.random(2, rng)
    k = TransitionKernel(3, seed=4)
    expected = cd_k_gradient(model_s, EmpiricalDistribution.from_model(model_b), k, 500)
    np.testing.assert_array_equal(cd_negative_gradient(model_s, model_b, kernel=k, chains=500), expected)


def test_negative_gradient_stationary_when_branches_agree():
    model = DiscreteEnergyModel.random(2, np.random.default_rng(8))
    grad, se = cd_negative_gradient(model, model, kernel=TransitionKernel(5, seed=1), chains=20000, return_stderr=True)
    assert np.all(np.abs(grad) <= 4 * se + 1e-15)


def test_negative_gradient_matches_oracle_n2():
    rng = np.random.default_rng(21)
    model_s, model_b = DiscreteEnergyModel.random(2, rng), DiscreteEnergyModel.random(2, rng)
    grad, se = cd_negative_gradient(model_s, model_b, kernel=TransitionKernel(50, seed=2), chains=20000, return_stderr=True)
    exact = exact_ml_gradient(model_s, EmpiricalDistribution.from_model(model_b))
    assert np.all(np.abs(grad - exact) <= 3 * se)


def test_convergence_g_values():
    model = DiscreteEnergyModel(1, [0.0])
    uniform = EmpiricalDistribution([[0.0], [1.0]], [0.5, 0.5])
    np.testing.assert_allclose(convergence_g(model, [1.0], uniform), [-0.5], atol=1e-15)
    rng = np.random.default_rng(0)
    model = DiscreteEnergyModel.random(3, rng)
    data = EmpiricalDistribution(all_states(3), rng.dirichlet(np.ones(8)))
    g = convergence_g(model, data.states, data)
    assert np.abs(data.probs @ g).max() <= 1e-12
    assert np.all(np.isfinite(g))


def test_kernel_matrix_stochastic_and_stationary():
    model = DiscreteEnergyModel.random(3, np.random.default_rng(6))
    k = kernel_matrix(model, 2)
    np.testing.assert_allclose(k.sum(axis=1), 1.0, atol=1e-12)
    p = model_distribution(model)
    np.testing.assert_allclose(p @ k, p, atol=1e-12)


def test_kernel_matrix_matches_sampled_chains():
    model = DiscreteEnergyModel.random(2, np.random.default_rng(7))
    start = EmpiricalDistribution([[1.0, 0.0]], [1.0])
    k = kernel_matrix(model, 1)
    exact_next = k[2] @ model.features(all_states(2))
    # from a point mass x0 the CD estimate is E[phi(x1)] - phi(x0); state [1, 0] is row 2
    est, se = cd_k_gradient(model, start, TransitionKernel(1, seed=5), 40000, return_stderr=True)
    sampled_next = model.features(np.array([1.0, 0.0])) + est
    assert np.all(np.abs(sampled_next - exact_next) <= 4 * se + 1e-12)


def test_k1_condition_well_specified_n2():
    model = DiscreteEnergyModel.random(2, np.random.default_rng(3))
    ratio, ok = check_k1_condition(model, model.theta, TransitionKernel(1, seed=0), radius=0.1)
    assert ok and ratio > 0
    assert check_k1_condition(model, model.theta, TransitionKernel(1, seed=0), radius=0.1) == (ratio, ok)


def test_k1_degenerate_probes_rejected():
    model = DiscreteEnergyModel.random(2, np.random.default_rng(3))
    with pytest.raises(ValueError):
        check_k1_condition(model, model.theta, radius=0.0)


def test_model_validation():
    with pytest.raises(ValueError):
        DiscreteEnergyModel(2, [0.0, 0.0])
    with pytest.raises(ValueError):
        EmpiricalDistribution([[0.0], [1.0]], [0.5, 0.6])
    with pytest.raises(ValueError):
        EmpiricalDistribution([[0.5]], [1.0])


def test_diagnostic_report(tmp_path):
    rows = diagnostic_rows()
    assert [r.sweeps for r in rows] == [0, 1, 5, 50]
    assert rows[0].grad_error_l2 == rows[0].exact_norm
    assert all(ok for _, ok, _ in oracle_checks(rows))
    write_report(rows, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "sweeps,chains,grad_error_l2,stderr,k1_estimate"
    assert len(lines) == 5
