"""Shared test utilities: finite-difference checker and small fixtures."""
from __future__ import annotations

import numpy as np

from fedcdl import autodiff as ad


def _away_from_zero(rng, shape, low=0.1, high=2.0):
    return rng.uniform(low, high, size=shape) * rng.choice([-1.0, 1.0], size=shape)


# name -> (input sampler, graph builder); every builder maps leaf nodes to a node
OP_CASES = {
    "add": (lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 3))], lambda a, b: ad.add(a, b)),
    "sub": (lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 3))], lambda a, b: ad.sub(a, b)),
    "mul": (lambda r: [r.normal(size=(3, 2)), r.normal(size=(3, 2))], lambda a, b: ad.mul(a, b)),
    "matmul": (lambda r: [r.normal(size=(2, 3)), r.normal(size=(3, 4))], lambda a, b: ad.matmul(a, b)),
    "relu": (lambda r: [_away_from_zero(r, (3, 3))], ad.relu),
    "exp": (lambda r: [r.uniform(-2, 2, size=(2, 3))], ad.exp),
    "log": (lambda r: [r.uniform(0.5, 3.0, size=(2, 3))], ad.log),
    "sum": (lambda r: [r.normal(size=(2, 3))], ad.sum_),
    "mean": (lambda r: [r.normal(size=(4, 2))], ad.mean),
    "softmax": (lambda r: [r.normal(size=(3, 4)) * 2], ad.softmax),
    "reshape": (lambda r: [r.normal(size=(2, 6))], lambda a: ad.reshape(a, (3, 4))),
    "concat": (lambda r: [r.normal(size=(2, 3)), r.normal(size=(2, 2))], lambda a, b: ad.concat([a, b], axis=-1)),
    "scalar_mul": (lambda r: [r.normal(size=(2, 3))], lambda a: ad.scalar_mul(a, 1.7)),
    "abs": (lambda r: [_away_from_zero(r, (2, 3))], ad.abs_),
}


def _scalar_root(out: ad.Node, weights: np.ndarray) -> ad.Node:
    # random projection so every output element influences the scalar
    return ad.sum_(ad.mul(out, ad.constant(weights)))


def fd_relative_error(op: str, rng: np.random.Generator, h: float = 1e-6) -> float:
    """Max over inputs of ``|analytic - central FD| / max(|analytic|, |FD|, 1e-8)`` (norm-wise)."""
    sampler, build = OP_CASES[op]
    inputs = sampler(rng)
    out_shape = build(*[ad.constant(x) for x in inputs]).shape
    weights = rng.normal(size=out_shape)

    def value(arrays):
        return float(_scalar_root(build(*[ad.constant(a) for a in arrays]), weights).value)

    leaves = [ad.leaf(x, trainable=True) for x in inputs]
    grads = ad.backward(_scalar_root(build(*leaves), weights))
    worst = 0.0
    for k, x in enumerate(inputs):
        numeric = np.zeros_like(x)
        for idx in np.ndindex(x.shape):
            plus = [a.copy() for a in inputs]
            minus = [a.copy() for a in inputs]
            plus[k][idx] += h
            minus[k][idx] -= h
            numeric[idx] = (value(plus) - value(minus)) / (2 * h)
        analytic = grads[leaves[k]]
        scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-8)
        worst = max(worst, float(np.linalg.norm(analytic - numeric) / scale))
    return worst


# -- acceptance reporting -------------------------------------------------------

ACCEPTANCE_RESULTS = {}


def record(criterion: int, title: str, passed: bool, detail: str) -> bool:
    line = f"criterion {criterion:2d} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    ACCEPTANCE_RESULTS[criterion] = line
    print(line)
    return passed
