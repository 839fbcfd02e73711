"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` (the lines are repeated in the
terminal summary) or ``python tests/test_acceptance.py`` for the lines alone.
"""
import time

import numpy as np
import pytest

from fedcdl import autodiff as ad
from fedcdl.cdtheory import (
    DiscreteEnergyModel,
    EmpiricalDistribution,
    TransitionKernel,
    all_states,
    cd_k_gradient,
    check_k1_condition,
    convergence_g,
    exact_ml_gradient,
)
from fedcdl.cli import main as cli_main
from fedcdl.data import Dataset, DatasetPartition, SyntheticConfig, generate_synthetic, partition_dirichlet, train_test_split
from fedcdl.federation import TrainerConfig, aggregate_consensus, run_experiment, write_metrics_csv
from fedcdl.model import NetConfig, init_net
from fedcdl.topology import build_consensus_matrix, builtin_topology, is_doubly_stochastic, spectral_gap, star
from helpers import OP_CASES, fd_relative_error, record

pytestmark = pytest.mark.acceptance


# 1 -------------------------------------------------------------------------------

def test_c01_autodiff_finite_differences():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = {op: max(fd_relative_error(op, rng) for _ in range(50)) for op in ad.OPS}
    elapsed = time.perf_counter() - start
    op, err = max(worst.items(), key=lambda kv: kv[1])
    ok = set(OP_CASES) == set(ad.OPS) and err < 1e-5 and elapsed < 30
    record(1, "autodiff vs central differences", ok,
           f"{len(worst)} ops x 50 instances, worst rel err {err:.2e} ({op}), {elapsed:.1f}s")
    assert ok


# 2 -------------------------------------------------------------------------------

def _random_problem(seed, n=3):
    rng = np.random.default_rng(seed)
    model = DiscreteEnergyModel.random(n, rng, scale=2.0)
    data = EmpiricalDistribution(all_states(n), rng.dirichlet(np.ones(2 ** n)))
    return model, data


def test_c02_cd_matches_enumeration():
    start = time.perf_counter()
    passed, worst_z = 0, 0.0
    for seed in range(10):
        model, data = _random_problem(seed)
        grad, se = cd_k_gradient(model, data, TransitionKernel(50, seed=seed), 20000, return_stderr=True)
        z = np.abs(grad - exact_ml_gradient(model, data)) / se
        worst_z = max(worst_z, float(z.max()))
        passed += bool(np.all(z <= 3.0))
    elapsed = time.perf_counter() - start
    ok = passed == 10 and elapsed < 120
    record(2, "CD-50 vs exact gradient (n=3, 20000 chains)", ok,
           f"{passed}/10 seeds within 3 SE, worst z {worst_z:.2f}, {elapsed:.1f}s")
    assert ok


# 3 -------------------------------------------------------------------------------

def test_c03_cd_error_non_increasing_in_sweeps():
    start = time.perf_counter()
    sweeps = (1, 5, 50)
    errors = np.zeros((30, len(sweeps)))
    for seed in range(30):
        model, data = _random_problem(seed)
        exact = exact_ml_gradient(model, data)
        for j, k in enumerate(sweeps):
            est = cd_k_gradient(model, data, TransitionKernel(k, seed=seed), 20000)
            errors[seed, j] = np.linalg.norm(est - exact)
    mean = errors.mean(axis=0)
    elapsed = time.perf_counter() - start
    ok = bool(np.all(np.diff(mean) <= 0)) and elapsed < 180
    shown = ", ".join(f"{k}: {m:.5f}" for k, m in zip(sweeps, mean))
    record(3, "mean CD gradient error over sweeps", ok, f"{shown} (30 seeds), {elapsed:.1f}s")
    assert ok


# 4 -------------------------------------------------------------------------------

def test_c04_convergence_diagnostics():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(20):
        model, data = _random_problem(seed, n=1 + seed % 4)
        g = convergence_g(model, data.states, data)
        worst = max(worst, float(np.abs(data.probs @ g).max()))
    model = DiscreteEnergyModel.random(2, np.random.default_rng(7))
    ratio, satisfied = check_k1_condition(model, model.theta, TransitionKernel(1, seed=0), radius=0.1)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and satisfied and elapsed < 30
    record(4, "E_P0[g] = 0 and k1 condition", ok,
           f"max |E_P0[g]| {worst:.1e}, k1 estimate {ratio:.4f} satisfied={satisfied}, {elapsed:.1f}s")
    assert ok


# 5 -------------------------------------------------------------------------------

def test_c05_consensus_invariants():
    from test_federation import _toy_silos

    rng = np.random.default_rng(5)
    details, ok = [], True
    for name in ("gaia11", "nws22", "exodus79"):
        g = builtin_topology(name)
        a = build_consensus_matrix(g)
        gap = spectral_gap(a)
        silos = _toy_silos(rng.normal(size=(g.n, 100)))
        before = np.mean([s.agent.backbone["w"] for s in silos], axis=0)
        after = np.mean([s.agent.backbone["w"] for s in aggregate_consensus(silos, a)], axis=0)
        drift = float(np.abs(after - before).max())
        ok &= is_doubly_stochastic(a, 1e-12) and gap > 0 and drift <= 1e-12
        details.append(f"{name} gap {gap:.4g} mean drift {drift:.1e}")
    record(5, "consensus matrices", ok, "; ".join(details))
    assert ok


# 6 -------------------------------------------------------------------------------

def _reference_fedavg(net, x, y, split, seed, rounds, lr, batch):
    """Independent FedAvg: hand-written backprop, per-silo Adam, sample-weighted averaging."""
    params = [a.copy() for _, a in init_net(net, seed)]
    shards = [(x[:split], y[:split]), (x[split:], y[split:])]
    weights = np.array([split, len(y) - split]) / len(y)
    rngs = [np.random.default_rng([seed, 1, i]) for i in range(2)]
    moments = [([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params]) for _ in range(2)]
    for t in range(1, rounds + 1):
        local = []
        for i, (xs, ys) in enumerate(shards):
            idx = rngs[i].choice(len(ys), size=min(batch, len(ys)), replace=False)
            xb, yb = xs[idx], ys[idx, None]
            w0, b0, w1, b1, w2, b2, wf, bf, wh, bh = params
            h0 = np.maximum(xb @ w0 + b0, 0)
            a = np.maximum(h0 @ w1 + b1, 0)
            h1 = h0 + a @ w2 + b2
            f = h1 @ wf + bf
            dp = np.sign(f @ wh + bh - yb) / len(yb)
            df = dp @ wh.T
            dh1 = df @ wf.T
            da = (dh1 @ w2.T) * (a > 0)
            dh0 = (dh1 + da @ w1.T) * (h0 > 0)
            grads = [xb.T @ dh0, dh0.sum(0), h0.T @ da, da.sum(0), a.T @ dh1, dh1.sum(0), h1.T @ df, df.sum(0), f.T @ dp, dp.sum(0)]
            m, v = moments[i]
            m[:] = [0.9 * mm + 0.1 * g for mm, g in zip(m, grads)]
            v[:] = [0.999 * vv + 0.001 * g * g for vv, g in zip(v, grads)]
            local.append([p - lr * (mm / (1 - 0.9 ** t)) / (np.sqrt(vv / (1 - 0.999 ** t)) + 1e-8)
                          for p, mm, vv in zip(params, m, v)])
        params = [weights[0] * p + weights[1] * q for p, q in zip(*local)]
    return np.concatenate([p.ravel() for p in params])


def test_c06_fedavg_reference():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(50, 3))
    y = x @ np.array([0.3, -0.2, 0.1]) + 0.05 + 0.01 * rng.normal(size=50)
    ds = Dataset(x, y, np.zeros(50, dtype=int))
    part = DatasetPartition((np.arange(20), np.arange(20, 50)))
    net = NetConfig(input_dim=3, hidden_dim=8, residual_blocks=1, feature_dim=4)
    cfg = TrainerConfig(rounds=50, local_updates=1, scheme="SFL", cdl_enabled=False, net=net,
                        batch_size=8, learning_rate=0.01, seed=3)
    engine = run_experiment(cfg, ds, ds, part, star(2)).global_params.flatten()
    reference = _reference_fedavg(net, x, y, 20, 3, 50, 0.01, 8)
    moved = float(np.abs(reference - init_net(net, 3).flatten()).max())
    diff = float(np.abs(engine - reference).max())
    ok = diff <= 1e-10 and moved > 1e-2
    record(6, "SFL u=1 without CDL vs reference FedAvg", ok,
           f"max |engine - reference| {diff:.1e} after 50 rounds (params moved {moved:.3f})")
    assert ok


# 7 / 8 -----------------------------------------------------------------------------

def _ab_run(alpha, seeds, rounds=200, topology="gaia11", u=2):
    topo = builtin_topology(topology)
    out = []
    for seed in seeds:
        ds = generate_synthetic(SyntheticConfig(mode_count=3, samples_total=6000, dirichlet_alpha=alpha, seed=seed))
        train, test = train_test_split(ds, 0.2, seed)
        part = partition_dirichlet(train, topo.n, alpha, seed)
        pair = []
        for cdl in (True, False):
            cfg = TrainerConfig(rounds=rounds, local_updates=u, scheme="DFL", cdl_enabled=cdl, seed=seed)
            pair.append(run_experiment(cfg, train, test, part, topo).history[-1].global_rmse)
        out.append(pair)
    return np.array(out)


@pytest.mark.slow
def test_c07_non_iid_cdl_beats_no_cdl():
    start = time.perf_counter()
    rmse = _ab_run(0.1, range(5))
    elapsed = time.perf_counter() - start
    wins = int(np.sum(rmse[:, 0] < rmse[:, 1]))
    improvement = 1.0 - rmse[:, 0].mean() / rmse[:, 1].mean()
    ok = wins >= 4 and improvement >= 0.05 and elapsed < 600
    per_seed = " ".join(f"{a:.4f}/{b:.4f}" for a, b in rmse)
    record(7, "non-IID A/B (alpha 0.1, gaia11, DFL, u=2, 200 rounds)", ok,
           f"CDL wins {wins}/5, mean RMSE improvement {improvement:+.2%} (need >= 4/5 and >= 5%); "
           f"on/off per seed {per_seed}; {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_c08_iid_no_harm():
    rmse = _ab_run(1e6, range(5))
    ratio = rmse[:, 0].mean() / rmse[:, 1].mean()
    ok = ratio <= 1.05
    record(8, "IID no-harm (alpha 1e6)", ok,
           f"mean RMSE CDL/no-CDL = {ratio:.4f} (need <= 1.05); "
           f"{rmse[:, 0].mean():.4f} vs {rmse[:, 1].mean():.4f}")
    assert ok


# 9 -------------------------------------------------------------------------------

@pytest.mark.slow
def test_c09_exodus_scale_robustness():
    start = time.perf_counter()
    topo = builtin_topology("exodus79")
    results = []
    for seed in range(3):
        ds = generate_synthetic(SyntheticConfig(dirichlet_alpha=0.1, seed=seed))
        train, test = train_test_split(ds, 0.2, seed)
        part = partition_dirichlet(train, topo.n, 0.1, seed)
        cfg = TrainerConfig(rounds=100, local_updates=2, scheme="DFL", cdl_enabled=True, seed=seed)
        res = run_experiment(cfg, train, test, part, topo)
        finite = all(
            np.all(np.isfinite(r.train_mae)) and np.all(np.isfinite(r.cd_plus)) and np.isfinite(r.global_rmse)
            for r in res.history
        )
        results.append((len(res.history), finite, res.initial_rmse, res.history[-1].global_rmse))
    elapsed = time.perf_counter() - start
    good = sum(n == 100 and fin and final <= 0.7 * init for n, fin, init, final in results)
    ok = good == 3 and elapsed < 900
    shown = "; ".join(f"{init:.3f} -> {final:.3f}" for _, _, init, final in results)
    record(9, "exodus79 CDL DFL, 100 rounds", ok,
           f"{good}/3 seeds finite with final <= 0.7 x untrained RMSE ({shown}); {elapsed:.0f}s")
    assert ok


# 10 ------------------------------------------------------------------------------

SPEC = """\
[experiment]
spec_version = 1
seeds = 0, 1
output = {out}

[data]
samples_total = 900
dirichlet_alpha = 0.1

[topology]
name = gaia11

[trainer]
scheme = {scheme}
rounds = 4
local_updates = 2
cdl_enabled = true
update_order = {order}
"""


def test_c10_determinism(tmp_path):
    identical = []
    for scheme, order in (("DFL", "sequential"), ("SFL", "simultaneous"), ("CLL", "sequential")):
        digests = []
        for rep in ("a", "b"):
            spec = tmp_path / f"{scheme}_{rep}.ini"
            spec.write_text(SPEC.format(out=tmp_path / f"{scheme}_{rep}", scheme=scheme, order=order))
            assert cli_main(["run", str(spec)]) == 0
            digests.append([(tmp_path / f"{scheme}_{rep}" / f"seed_{s}" / "metrics.csv").read_bytes() for s in (0, 1)])
        identical.append(digests[0] == digests[1])
    ok = all(identical)
    record(10, "byte-identical metrics CSV on rerun", ok,
           f"DFL/SFL/CLL x 2 seeds identical: {identical}")
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
