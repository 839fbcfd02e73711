"""Federated steering regression with a contrastive divergence loss.

Submodules
----------
autodiff   reverse-mode differentiation over float64 arrays
model      residual MLP and the Siamese backbone/sub-network pair
losses     MAE, KL and contrastive divergence losses
cdtheory   exact and CD-k gradients on enumerable Boltzmann machines
data       synthetic non-IID driving data, CSV I/O, partitioning
topology   silo graphs, consensus matrices, cycle-time estimates
federation round engine for CLL, SFL and DFL training
cli        command-line entry point
"""

__version__ = "0.1.0"
