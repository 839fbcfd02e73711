"""Synchronous round engine for centralized, server-based and decentralized training.

Every silo holds a Siamese pair. Iterations are counted globally: iteration
``k`` (1-based) is an aggregation step when ``k % (u + 1) == 0`` and a local
step otherwise, so a communication round is ``u`` local steps followed by one
aggregation. Only backbones ever leave a silo; sub-networks and optimizer
state stay local.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import pdist

from . import autodiff as ad
from .data import Dataset, DatasetPartition
from .losses import CdlConfig, backbone_loss, cdl_loss, mae_loss, subnet_loss
from .model import (
    AdamState,
    ModelParams,
    NetConfig,
    SiameseAgent,
    adam_init,
    adam_step,
    forward_features,
    init_siamese,
    params_from_bytes,
    params_to_bytes,
    predict,
)
from .topology import TopologyGraph, aggregation_weights, build_consensus_matrix

log = logging.getLogger(__name__)

__all__ = [
    "SCHEMES",
    "TrainerConfig",
    "SiloState",
    "RoundClock",
    "MetricsRecord",
    "FederationState",
    "Transport",
    "RecordingTransport",
    "TrainingDivergedError",
    "StepStats",
    "evaluate",
    "sample_batch",
    "local_update_backbone",
    "local_update_subnet",
    "local_update_simultaneous",
    "aggregate_consensus",
    "aggregate_global",
    "init_state",
    "global_params",
    "run_round",
    "run_experiment",
    "ExperimentResult",
    "save_checkpoint",
    "load_checkpoint",
    "write_metrics_csv",
    "METRICS_COLUMNS",
]

SCHEMES = ("CLL", "SFL", "DFL")


class TrainingDivergedError(RuntimeError):
    """A loss or parameter became non-finite."""


@dataclass(frozen=True)
class TrainerConfig:
    """Training hyper-parameters; defaults follow the reported setup (Adam, lr 1e-3, batch 32)."""

    learning_rate: float = 1e-3
    batch_size: int = 32
    local_updates: int = 2
    rounds: int = 200
    scheme: str = "DFL"
    cdl_enabled: bool = True
    cdl: CdlConfig = field(default_factory=CdlConfig)
    net: NetConfig = field(default_factory=NetConfig)
    update_order: str = "sequential"
    shared_init: bool = True
    checkpoint_every: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.local_updates < 1:
            raise ValueError("local_updates must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.rounds < 0:
            raise ValueError("rounds must be >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.update_order not in ("sequential", "simultaneous"):
            raise ValueError("update_order must be 'sequential' or 'simultaneous'")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainerConfig":
        d = dict(d)
        d["cdl"] = CdlConfig(**d.get("cdl", {}))
        d["net"] = NetConfig(**d.get("net", {}))
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class SiloState:
    silo_id: int
    agent: SiameseAgent
    backbone_opt: AdamState
    subnet_opt: AdamState
    data: Dataset
    rng: np.random.Generator


@dataclass
class RoundClock:
    """``k`` counts completed iterations; ``round`` counts completed communication rounds."""

    local_updates: int
    k: int = 0

    @property
    def period(self) -> int:
        return self.local_updates + 1

    @property
    def round(self) -> int:
        return self.k // self.period

    @staticmethod
    def is_aggregation(k: int, local_updates: int) -> bool:
        return k % (local_updates + 1) == 0


@dataclass
class MetricsRecord:
    round: int
    silo_rmse: np.ndarray
    silo_mae: np.ndarray
    global_rmse: float
    global_mae: float
    param_distance: float
    train_mae: np.ndarray
    cd_plus: np.ndarray
    cd_minus: np.ndarray


@dataclass
class FederationState:
    silos: List[SiloState]
    clock: RoundClock
    counts: np.ndarray


@dataclass
class StepStats:
    mae: float = float("nan")
    cd_plus: float = float("nan")
    cd_minus: float = float("nan")


class Transport:
    """Carries serialized backbones between silos."""

    def send(self, src: int, dst: int, payload: bytes) -> bytes:
        return payload


class RecordingTransport(Transport):
    """Transport that keeps every payload for later inspection."""

    def __init__(self):
        self.log: List[Tuple[int, int, bytes]] = []

    def send(self, src, dst, payload):
        self.log.append((src, dst, payload))
        return payload


# -- evaluation ----------------------------------------------------------------

def evaluate(params: ModelParams, eval_set: Dataset) -> Tuple[float, float]:
    """``(rmse, mae)`` of steering predictions on ``eval_set``."""
    if len(eval_set) == 0:
        raise ValueError("evaluate: empty evaluation set")
    _, pred = predict(params, eval_set.features)
    err = pred[:, 0] - eval_set.angles
    return float(np.sqrt(np.mean(err * err))), float(np.mean(np.abs(err)))


def _check_finite(value, what: str, silo_id: int, k: int):
    value = np.asarray(value)
    if not np.all(np.isfinite(value)):
        shown = float(value) if value.size == 1 else "non-finite"
        raise TrainingDivergedError(f"silo {silo_id}, iteration {k}: {what} is {shown}")


def _adam(params, grads_by_leaf, leaves, opt, lr, silo_id, k):
    # leaves outside the loss graph (e.g. the head under the sub-network loss) get zero gradient
    grads = [grads_by_leaf[leaf] if leaf in grads_by_leaf else np.zeros(leaf.shape) for leaf in leaves]
    try:
        return adam_step(params, grads, opt, lr)
    except ValueError as exc:
        raise TrainingDivergedError(f"silo {silo_id}, iteration {k}: {exc}") from None


# -- local updates ---------------------------------------------------------------

def sample_batch(silo: SiloState, batch_size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Draw ``min(batch_size, n_i)`` distinct samples from the silo's data."""
    n = len(silo.data)
    idx = silo.rng.choice(n, size=min(batch_size, n), replace=False)
    return silo.data.features[idx], silo.data.targets()[idx]


def local_update_backbone(
    silo: SiloState, batch, config: TrainerConfig, beta: Optional[float] = None, k: int = 0
) -> Tuple[SiloState, StepStats]:
    """One Adam step of the backbone on ``L_lr + beta * L_cd+`` (``L_lr`` alone without CDL)."""
    x, y = batch
    beta = config.cdl.beta if beta is None else beta
    leaves = silo.agent.backbone.leaves()
    features, pred = forward_features(leaves, x)
    _check_finite(pred.value, "backbone output", silo.silo_id, k)
    _check_finite(features.value, "backbone features", silo.silo_id, k)
    mae = mae_loss(pred, y)
    stats = StepStats(mae=float(mae.value))
    loss = mae
    if config.cdl_enabled:
        sub_features, _ = predict(silo.agent.subnet, x)
        _check_finite(sub_features, "sub-network features", silo.silo_id, k)
        cd_plus, cd_minus, _ = cdl_loss(features, sub_features, config.cdl, beta)
        loss = backbone_loss(mae, cd_plus, beta, config.cdl.weighted_positive)
        stats.cd_plus, stats.cd_minus = float(cd_plus.value), float(cd_minus.value)
    _check_finite(float(loss.value), "backbone loss", silo.silo_id, k)
    grads = ad.backward(loss)
    params, opt = _adam(silo.agent.backbone, grads, leaves, silo.backbone_opt, config.learning_rate, silo.silo_id, k)
    agent = replace(silo.agent, backbone=params)
    return replace(silo, agent=agent, backbone_opt=opt), stats


def local_update_subnet(
    silo: SiloState, batch, config: TrainerConfig, beta: Optional[float] = None, k: int = 0
) -> Tuple[SiloState, StepStats]:
    """One Adam step of the sub-network on ``(1 - beta) * L_cd-``; the backbone is a fixed target."""
    if not config.cdl_enabled:
        raise ValueError("sub-network updates require cdl_enabled")
    x, _ = batch
    beta = config.cdl.beta if beta is None else beta
    leaves = silo.agent.subnet.leaves()
    features, _ = forward_features(leaves, x)
    back_features, _ = predict(silo.agent.backbone, x)
    _check_finite(features.value, "sub-network features", silo.silo_id, k)
    _check_finite(back_features, "backbone features", silo.silo_id, k)
    cd_plus, cd_minus, _ = cdl_loss(back_features, features, config.cdl, beta)
    loss = subnet_loss(cd_minus, beta)
    _check_finite(float(loss.value), "sub-network loss", silo.silo_id, k)
    grads = ad.backward(loss)
    params, opt = _adam(silo.agent.subnet, grads, leaves, silo.subnet_opt, config.learning_rate, silo.silo_id, k)
    agent = replace(silo.agent, subnet=params)
    return replace(silo, agent=agent, subnet_opt=opt), StepStats(
        cd_plus=float(cd_plus.value), cd_minus=float(cd_minus.value)
    )


def local_update_simultaneous(
    silo: SiloState, batch, config: TrainerConfig, beta: Optional[float] = None, k: int = 0
) -> Tuple[SiloState, StepStats]:
    """Both branch updates computed from the same pre-step parameters."""
    x, y = batch
    beta = config.cdl.beta if beta is None else beta
    b_leaves = silo.agent.backbone.leaves()
    s_leaves = silo.agent.subnet.leaves()
    b_features, pred = forward_features(b_leaves, x)
    s_features, _ = forward_features(s_leaves, x)
    for what, arr in (("backbone output", pred.value), ("backbone features", b_features.value),
                      ("sub-network features", s_features.value)):
        _check_finite(arr, what, silo.silo_id, k)
    mae = mae_loss(pred, y)
    cd_plus, cd_minus, _ = cdl_loss(b_features, s_features, config.cdl, beta)
    total = ad.add(backbone_loss(mae, cd_plus, beta, config.cdl.weighted_positive), subnet_loss(cd_minus, beta))
    _check_finite(float(total.value), "local loss", silo.silo_id, k)
    grads = ad.backward(total)
    lr = config.learning_rate
    backbone, b_opt = _adam(silo.agent.backbone, grads, b_leaves, silo.backbone_opt, lr, silo.silo_id, k)
    subnet, s_opt = _adam(silo.agent.subnet, grads, s_leaves, silo.subnet_opt, lr, silo.silo_id, k)
    agent = replace(silo.agent, backbone=backbone, subnet=subnet)
    stats = StepStats(float(mae.value), float(cd_plus.value), float(cd_minus.value))
    return replace(silo, agent=agent, backbone_opt=b_opt, subnet_opt=s_opt), stats


# -- aggregation -------------------------------------------------------------------

def aggregate_consensus(
    silos: Sequence[SiloState], matrix: np.ndarray, transport: Optional[Transport] = None
) -> List[SiloState]:
    """Synchronous gossip: ``theta_i <- sum_j A_ij theta_j`` over pre-aggregation snapshots.

    Each silo receives serialized backbones from its neighbours (non-zero
    off-diagonal entries of ``matrix``) through ``transport``.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    n = len(silos)
    if matrix.shape != (n, n):
        raise ValueError(f"consensus matrix is {matrix.shape}, expected ({n}, {n})")
    transport = transport or Transport()
    template = silos[0].agent.backbone
    snapshots = [params_to_bytes(s.agent.backbone) for s in silos]
    flats = [s.agent.backbone.flatten() for s in silos]
    out = []
    for i, silo in enumerate(silos):
        acc = matrix[i, i] * flats[i]
        for j in np.flatnonzero(matrix[i]):
            if j == i:
                continue
            received = params_from_bytes(transport.send(int(j), i, snapshots[j]))
            acc = acc + matrix[i, j] * received.flatten()
        agent = replace(silo.agent, backbone=template.unflatten(acc))
        out.append(replace(silo, agent=agent))
    return out


def aggregate_global(
    silos: Sequence[SiloState], weights: Sequence[float], transport: Optional[Transport] = None, server: int = -1
) -> ModelParams:
    """Server-side weighted average ``sum_i w_i theta_i`` of the backbones."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(silos),):
        raise ValueError(f"expected {len(silos)} weights, got shape {weights.shape}")
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("aggregation weights must be non-negative and sum to 1")
    transport = transport or Transport()
    template = silos[0].agent.backbone
    acc = np.zeros(template.size)
    for w, silo in zip(weights, silos):
        if w == 0.0:
            continue
        received = params_from_bytes(transport.send(silo.silo_id, server, params_to_bytes(silo.agent.backbone)))
        acc = acc + w * received.flatten()
    return template.unflatten(acc)


def _broadcast(silos, params: ModelParams, transport: Transport, server: int = -1) -> List[SiloState]:
    blob = params_to_bytes(params)
    out = []
    for s in silos:
        received = params_from_bytes(transport.send(server, s.silo_id, blob))
        out.append(replace(s, agent=replace(s.agent, backbone=received)))
    return out


# -- orchestration -------------------------------------------------------------------

def _silo_init_seed(seed: int, silo_id: int) -> int:
    return int(np.random.SeedSequence([seed, silo_id]).generate_state(1)[0])


def init_state(config: TrainerConfig, train: Dataset, partition: Optional[DatasetPartition]) -> FederationState:
    """Fresh silos; the pooled CLL baseline gets a single silo holding all of ``train``."""
    if config.scheme == "CLL" or partition is None:
        shards = [train]
    else:
        shards = [partition.silo(train, i) for i in range(partition.silo_count)]
    silos = []
    for i, shard in enumerate(shards):
        if len(shard) == 0:
            raise ValueError(f"silo {i} has no data")
        seed = config.seed if config.shared_init else _silo_init_seed(config.seed, i)
        agent = init_siamese(config.net, seed)
        silos.append(
            SiloState(
                silo_id=i,
                agent=agent,
                backbone_opt=adam_init(agent.backbone),
                subnet_opt=adam_init(agent.subnet),
                data=shard,
                rng=np.random.default_rng([config.seed, 1, i]),
            )
        )
    counts = np.array([len(s.data) for s in silos])
    return FederationState(silos, RoundClock(config.local_updates), counts)


def global_params(state: FederationState, config: TrainerConfig) -> ModelParams:
    """The model reported as "global": sample-weighted for SFL, uniform consensus mean for DFL."""
    silos = state.silos
    first = silos[0].agent.backbone
    if all(s.agent.backbone == first for s in silos[1:]):
        return first
    if config.scheme == "SFL":
        weights = aggregation_weights(state.counts)
    else:
        weights = np.full(len(silos), 1.0 / len(silos))
    flat = sum(w * s.agent.backbone.flatten() for w, s in zip(weights, silos))
    return silos[0].agent.backbone.unflatten(flat)


def _mean_pairwise_distance(silos: Sequence[SiloState]) -> float:
    if len(silos) < 2:
        return 0.0
    return float(pdist(np.stack([s.agent.backbone.flatten() for s in silos])).mean())


def _local_iteration(silo: SiloState, config: TrainerConfig, beta: float, k: int) -> Tuple[SiloState, StepStats]:
    batch = sample_batch(silo, config.batch_size)
    if not config.cdl_enabled:
        return local_update_backbone(silo, batch, config, beta, k)
    if config.update_order == "simultaneous":
        return local_update_simultaneous(silo, batch, config, beta, k)
    silo, stats = local_update_backbone(silo, batch, config, beta, k)
    silo, sub_stats = local_update_subnet(silo, batch, config, beta, k)
    stats.cd_minus = sub_stats.cd_minus
    return silo, stats


def run_round(
    state: FederationState,
    config: TrainerConfig,
    topology: Optional[TopologyGraph] = None,
    eval_set: Optional[Dataset] = None,
    transport: Optional[Transport] = None,
    mixing: Optional[np.ndarray] = None,
) -> Tuple[FederationState, MetricsRecord]:
    """``u`` local iterations on every silo, then one aggregation step.

    DFL mixes backbones with the Metropolis-Hastings matrix of ``topology``
    (or ``mixing`` when given); SFL averages on a server with sample-count
    weights and broadcasts; CLL never aggregates.
    """
    transport = transport or Transport()
    u = config.local_updates
    clock = RoundClock(u, state.clock.k)
    beta = config.cdl.beta_at(clock.round)
    silos = list(state.silos)
    n = len(silos)
    sums = np.zeros((n, 3))
    for _ in range(u):
        clock.k += 1
        assert not RoundClock.is_aggregation(clock.k, u)
        for i in range(n):
            silos[i], stats = _local_iteration(silos[i], config, beta, clock.k)
            sums[i] += (stats.mae, stats.cd_plus, stats.cd_minus)
    clock.k += 1
    assert RoundClock.is_aggregation(clock.k, u)
    if config.scheme == "DFL" and n > 1:
        if mixing is None:
            if topology is None:
                raise ValueError("DFL needs a topology or a mixing matrix")
            mixing = build_consensus_matrix(topology)
        silos = aggregate_consensus(silos, mixing, transport)
    elif config.scheme == "SFL" and n > 1:
        global_model = aggregate_global(silos, aggregation_weights(state.counts), transport)
        silos = _broadcast(silos, global_model, transport)
    new_state = FederationState(silos, clock, state.counts)

    record = MetricsRecord(
        round=clock.round,
        silo_rmse=np.full(n, np.nan),
        silo_mae=np.full(n, np.nan),
        global_rmse=float("nan"),
        global_mae=float("nan"),
        param_distance=_mean_pairwise_distance(silos),
        train_mae=sums[:, 0] / u,
        cd_plus=sums[:, 1] / u,
        cd_minus=sums[:, 2] / u,
    )
    if eval_set is not None:
        for i, s in enumerate(silos):
            record.silo_rmse[i], record.silo_mae[i] = evaluate(s.agent.backbone, eval_set)
        record.global_rmse, record.global_mae = evaluate(global_params(new_state, config), eval_set)
    return new_state, record


# -- checkpoints -----------------------------------------------------------------------

def save_checkpoint(state: FederationState, config: TrainerConfig, directory) -> Path:
    """Write every silo's parameters, Adam moments and RNG state plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    silos_meta = []
    for s in state.silos:
        stem = f"silo{s.silo_id:03d}"
        blobs = {
            "backbone": s.agent.backbone,
            "subnet": s.agent.subnet,
            "backbone_m": s.backbone_opt.m,
            "backbone_v": s.backbone_opt.v,
            "subnet_m": s.subnet_opt.m,
            "subnet_v": s.subnet_opt.v,
        }
        for key, params in blobs.items():
            (directory / f"{stem}.{key}.bin").write_bytes(params_to_bytes(params))
        silos_meta.append(
            {
                "silo_id": s.silo_id,
                "backbone_t": s.backbone_opt.t,
                "subnet_t": s.subnet_opt.t,
                "rng_state": s.rng.bit_generator.state,
            }
        )
    manifest = {
        "config_hash": config.config_hash(),
        "config": config.to_dict(),
        "round": state.clock.round,
        "k": state.clock.k,
        "counts": state.counts.tolist(),
        "silos": silos_meta,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return directory


def load_checkpoint(
    directory, config: TrainerConfig, train: Dataset, partition: Optional[DatasetPartition]
) -> FederationState:
    """Rebuild a :class:`FederationState` written by :func:`save_checkpoint`."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    if manifest["config_hash"] != config.config_hash():
        # round count may legitimately differ when extending a run
        saved = TrainerConfig.from_dict(manifest["config"])
        if replace(saved, rounds=config.rounds, checkpoint_every=config.checkpoint_every) != config:
            raise ValueError(f"{directory}: checkpoint was written with a different configuration")
    fresh = init_state(config, train, partition)
    silos = []
    for meta, base in zip(manifest["silos"], fresh.silos):
        stem = directory / f"silo{meta['silo_id']:03d}"

        def load(key):
            return params_from_bytes((Path(f"{stem}.{key}.bin")).read_bytes())

        rng = np.random.default_rng()
        rng.bit_generator.state = meta["rng_state"]
        agent = SiameseAgent(load("backbone"), load("subnet"), config.net)
        silos.append(
            SiloState(
                silo_id=meta["silo_id"],
                agent=agent,
                backbone_opt=AdamState(load("backbone_m"), load("backbone_v"), meta["backbone_t"]),
                subnet_opt=AdamState(load("subnet_m"), load("subnet_v"), meta["subnet_t"]),
                data=base.data,
                rng=rng,
            )
        )
    return FederationState(silos, RoundClock(config.local_updates, manifest["k"]), np.array(manifest["counts"]))


# -- experiment ----------------------------------------------------------------------

@dataclass
class ExperimentResult:
    history: List[MetricsRecord]
    state: FederationState
    global_params: ModelParams
    initial_rmse: float = float("nan")
    initial_mae: float = float("nan")


def run_experiment(
    config: TrainerConfig,
    train: Dataset,
    eval_set: Dataset,
    partition: Optional[DatasetPartition] = None,
    topology: Optional[TopologyGraph] = None,
    checkpoint_dir=None,
    resume_from=None,
    transport: Optional[Transport] = None,
    on_round: Optional[Callable[[MetricsRecord], None]] = None,
) -> ExperimentResult:
    """Train for ``config.rounds`` communication rounds.

    With ``resume_from`` the run continues from a checkpoint directory and
    only the remaining rounds are executed (and returned in ``history``).
    Checkpoints are written every ``config.checkpoint_every`` rounds when
    ``checkpoint_dir`` is given.
    """
    if config.scheme != "CLL" and partition is None:
        raise ValueError(f"{config.scheme} needs a data partition")
    if resume_from is not None:
        state = load_checkpoint(resume_from, config, train, partition)
    else:
        state = init_state(config, train, partition)
    mixing = None
    if config.scheme == "DFL" and len(state.silos) > 1:
        if topology is None:
            raise ValueError("DFL needs a topology")
        if topology.n != len(state.silos):
            raise ValueError(f"topology has {topology.n} silos, partition has {len(state.silos)}")
        mixing = build_consensus_matrix(topology)
    init_rmse, init_mae = evaluate(global_params(state, config), eval_set)
    history = []
    while state.clock.round < config.rounds:
        state, record = run_round(state, config, topology, eval_set, transport, mixing)
        history.append(record)
        if on_round is not None:
            on_round(record)
        if checkpoint_dir is not None and config.checkpoint_every and record.round % config.checkpoint_every == 0:
            save_checkpoint(state, config, Path(checkpoint_dir) / f"round_{record.round:05d}")
        log.debug("round %d global rmse %.5f", record.round, record.global_rmse)
    return ExperimentResult(history, state, global_params(state, config), init_rmse, init_mae)


METRICS_COLUMNS = ("round", "silo", "rmse", "mae", "train_mae", "cd_plus", "cd_minus", "param_distance")


def _fmt(x: float) -> str:
    return repr(float(x))


def write_metrics_csv(history: Sequence[MetricsRecord], path, append: bool = False) -> None:
    """One row per silo per round plus a ``global`` row carrying means and the distance."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a" if append else "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if not append:
            writer.writerow(METRICS_COLUMNS)
        for r in history:
            for i in range(len(r.silo_rmse)):
                writer.writerow(
                    [r.round, i, _fmt(r.silo_rmse[i]), _fmt(r.silo_mae[i]), _fmt(r.train_mae[i]),
                     _fmt(r.cd_plus[i]), _fmt(r.cd_minus[i]), ""]
                )
            writer.writerow(
                [r.round, "global", _fmt(r.global_rmse), _fmt(r.global_mae), _fmt(np.mean(r.train_mae)),
                 _fmt(np.mean(r.cd_plus)), _fmt(np.mean(r.cd_minus)), _fmt(r.param_distance)]
            )
