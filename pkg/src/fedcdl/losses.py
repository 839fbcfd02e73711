"""Regression, KL and contrastive divergence losses on autodiff graphs."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import autodiff as ad

__all__ = [
    "CdlConfig",
    "mae_loss",
    "feature_distribution",
    "kl_divergence",
    "cdl_loss",
    "backbone_loss",
    "subnet_loss",
    "final_loss",
]


@dataclass(frozen=True)
class CdlConfig:
    """Settings of the contrastive divergence loss.

    ``beta`` splits weight between the positive term (trains the backbone)
    and the negative term (trains the sub-network). When ``beta_end`` and
    ``decay_rounds`` are set, beta decays linearly from ``beta`` to
    ``beta_end`` over that many communication rounds and stays there.
    ``weighted_positive`` selects ``L_lr + beta * L_cd+`` (True) or
    ``L_lr + L_cd+`` (False) for the backbone objective.
    """

    beta: float = 0.5
    temperature: float = 1.0
    smoothing_eps: float = 1e-6
    beta_end: Optional[float] = None
    decay_rounds: int = 0
    weighted_positive: bool = True

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.beta_end is not None and not 0.0 <= self.beta_end <= 1.0:
            raise ValueError(f"beta_end must lie in [0, 1], got {self.beta_end}")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if not 0.0 < self.smoothing_eps < 1e-3:
            raise ValueError("smoothing_eps must lie in (0, 1e-3)")
        if self.decay_rounds < 0:
            raise ValueError("decay_rounds must be non-negative")

    def beta_at(self, round_index: int) -> float:
        if self.beta_end is None or self.decay_rounds == 0:
            return self.beta
        frac = min(max(round_index, 0) / self.decay_rounds, 1.0)
        return self.beta + (self.beta_end - self.beta) * frac


def _as_node(x) -> ad.Node:
    return x if isinstance(x, ad.Node) else ad.constant(x)


def mae_loss(pred, targets) -> ad.Node:
    """Mean absolute error between ``[m x 1]`` predictions and targets."""
    pred, targets = _as_node(pred), _as_node(targets)
    if pred.value.size == 0:
        raise ValueError("mae_loss: empty batch")
    if pred.shape != targets.shape:
        raise ad.ShapeError(f"mae_loss: predictions {pred.shape} vs targets {targets.shape}")
    return ad.mean(ad.abs_(ad.sub(pred, targets)))


def feature_distribution(features, config: CdlConfig = CdlConfig()) -> ad.Node:
    """Batch-mean temperature softmax of ``[m x d]`` features, epsilon-smoothed.

    Every bin of the result is at least ``config.smoothing_eps`` and the bins
    sum to one, so the KL divergence between two such vectors is finite.
    """
    features = _as_node(features)
    if features.value.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 2:
        raise ad.ShapeError(f"feature_distribution: need [m x d] with m >= 1, d >= 2, got {features.shape}")
    if not np.all(np.isfinite(features.value)):
        raise ValueError("feature_distribution: non-finite features")
    m, d = features.shape
    eps = config.smoothing_eps
    rows = ad.softmax(ad.scalar_mul(features, 1.0 / config.temperature))
    batch_mean = ad.reshape(ad.matmul(ad.constant(np.full((1, m), 1.0 / m)), rows), (d,))
    return ad.add(ad.scalar_mul(batch_mean, 1.0 - d * eps), ad.constant(np.full(d, eps)))


def kl_divergence(p, q) -> ad.Node:
    """``sum p * log(p / q)`` in nats."""
    p, q = _as_node(p), _as_node(q)
    if p.shape != q.shape:
        raise ad.ShapeError(f"kl_divergence: dimension mismatch {p.shape} vs {q.shape}")
    return ad.sum_(ad.mul(p, ad.sub(ad.log(p), ad.log(q))))


def cdl_loss(
    backbone_features,
    subnet_features,
    config: CdlConfig = CdlConfig(),
    beta: Optional[float] = None,
) -> Tuple[ad.Node, ad.Node, ad.Node]:
    """Positive term, negative term and their beta-weighted combination.

    The positive term treats the sub-network distribution as a fixed soft
    label, so it only carries gradient into the backbone; the negative term
    is the mirror image. Both distributions are recomputed on every call.
    """
    backbone_features, subnet_features = _as_node(backbone_features), _as_node(subnet_features)
    if backbone_features.shape != subnet_features.shape:
        raise ad.ShapeError(
            f"cdl_loss: feature shapes differ {backbone_features.shape} vs {subnet_features.shape}"
        )
    beta = config.beta if beta is None else beta
    p_backbone = feature_distribution(backbone_features, config)
    p_subnet = feature_distribution(subnet_features, config)
    cd_plus = kl_divergence(p_backbone, ad.detach(p_subnet))
    cd_minus = kl_divergence(p_subnet, ad.detach(p_backbone))
    combined = ad.add(ad.scalar_mul(cd_plus, beta), ad.scalar_mul(cd_minus, 1.0 - beta))
    return cd_plus, cd_minus, combined


def backbone_loss(mae: ad.Node, cd_plus: ad.Node, beta: float, weighted: bool = True) -> ad.Node:
    return ad.add(mae, ad.scalar_mul(cd_plus, beta if weighted else 1.0))


def subnet_loss(cd_minus: ad.Node, beta: float) -> ad.Node:
    return ad.scalar_mul(cd_minus, 1.0 - beta)


def final_loss(mae: ad.Node, cdl_combined: ad.Node) -> ad.Node:
    """Unweighted sum of the regression loss and the combined CDL."""
    return ad.add(mae, cdl_combined)
