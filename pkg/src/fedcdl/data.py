"""Synthetic non-IID driving data, CSV I/O and Dirichlet silo partitioning.

Each latent mode stands for a road condition (highway, city, ...). A mode
owns a Gaussian cluster in feature space and its own steering map, so a silo
dominated by one mode differs from the others in both inputs and labels.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import numpy as np

__all__ = [
    "Dataset",
    "SyntheticConfig",
    "DatasetPartition",
    "generate_synthetic",
    "steering_map",
    "train_test_split",
    "partition_dirichlet",
    "partition_iid",
    "load_csv",
    "write_csv",
    "silo_angle_histogram",
    "total_variation",
]

MAX_ANGLE = math.pi


@dataclass(frozen=True)
class Dataset:
    """Rows of features with steering angles (radians) and latent mode ids.

    ``modes`` is -1 for data whose mode is unknown (e.g. loaded from CSV).
    """

    features: np.ndarray
    angles: np.ndarray
    modes: np.ndarray

    def __post_init__(self):
        x = np.array(self.features, dtype=np.float64)
        y = np.array(self.angles, dtype=np.float64).ravel()
        z = np.array(self.modes, dtype=np.int64).ravel()
        if x.ndim != 2 or x.shape[0] != y.shape[0] or z.shape[0] != y.shape[0]:
            raise ValueError("features [n x d], angles [n] and modes [n] must agree")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite values")
        if np.any(np.abs(y) > MAX_ANGLE):
            raise ValueError("steering angles must satisfy |angle| <= pi")
        for a in (x, y, z):
            a.setflags(write=False)
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "angles", y)
        object.__setattr__(self, "modes", z)

    def __len__(self):
        return self.angles.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.features[idx], self.angles[idx], self.modes[idx])

    def targets(self) -> np.ndarray:
        return self.angles.reshape(-1, 1)


@dataclass(frozen=True)
class SyntheticConfig:
    mode_count: int = 3
    samples_total: int = 6000
    dirichlet_alpha: float = 0.1
    noise_std: float = 0.05
    input_dim: int = 16
    cluster_spread: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode_count < 2:
            raise ValueError("mode_count must be >= 2")
        if self.samples_total < self.mode_count:
            raise ValueError("samples_total must be at least mode_count")
        if self.dirichlet_alpha <= 0:
            raise ValueError("dirichlet_alpha must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be non-negative")
        if self.input_dim < 1:
            raise ValueError("input_dim must be positive")


@dataclass(frozen=True)
class _ModeMap:
    center: np.ndarray
    linear: np.ndarray
    curve: np.ndarray
    offset: float


def _mode_maps(config: SyntheticConfig, rng: np.random.Generator) -> List[_ModeMap]:
    d = config.input_dim
    maps = []
    # offsets spread over [-0.4, 0.4] rad: e.g. left-curving, straight, right-curving roads
    offsets = np.linspace(-0.4, 0.4, config.mode_count)
    for m in range(config.mode_count):
        maps.append(
            _ModeMap(
                center=rng.normal(0.0, 1.5, size=d),
                linear=rng.normal(0.0, 1.0, size=d) / np.sqrt(d),
                curve=rng.normal(0.0, 1.0, size=d) / np.sqrt(d),
                offset=float(offsets[m]),
            )
        )
    return maps


def steering_map(mode: _ModeMap, features: np.ndarray) -> np.ndarray:
    """Noise-free steering angle of a mode: bounded linear part plus a sine."""
    centered = features - mode.center
    return mode.offset + 0.3 * np.tanh(centered @ mode.linear) + 0.15 * np.sin(2.0 * (centered @ mode.curve))


def generate_synthetic(config: SyntheticConfig) -> Dataset:
    """Deterministic multi-mode dataset; sample ``i`` belongs to mode ``i % mode_count``."""
    rng = np.random.default_rng(config.seed)
    maps = _mode_maps(config, rng)
    modes = np.arange(config.samples_total) % config.mode_count
    centers = np.stack([mp.center for mp in maps])
    x = centers[modes] + rng.normal(0.0, config.cluster_spread, size=(config.samples_total, config.input_dim))
    y = np.empty(config.samples_total)
    for m, mp in enumerate(maps):
        sel = modes == m
        y[sel] = steering_map(mp, x[sel])
    if config.noise_std > 0:
        y = y + rng.normal(0.0, config.noise_std, size=y.shape)
    return Dataset(x, np.clip(y, -MAX_ANGLE, MAX_ANGLE), modes)


def train_test_split(dataset: Dataset, test_fraction: float = 0.2, seed: int = 0):
    """Split stratified by mode; returns ``(train, test)``."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    test_idx = []
    for m in np.unique(dataset.modes):
        idx = np.flatnonzero(dataset.modes == m)
        idx = rng.permutation(idx)
        test_idx.append(idx[: int(round(test_fraction * idx.size))])
    test_idx = np.sort(np.concatenate(test_idx))
    mask = np.ones(len(dataset), dtype=bool)
    mask[test_idx] = False
    return dataset.subset(np.flatnonzero(mask)), dataset.subset(test_idx)


@dataclass(frozen=True)
class DatasetPartition:
    """Disjoint index sets into a dataset, one per silo."""

    indices: tuple

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(np.sort(np.asarray(i, dtype=np.int64)) for i in self.indices))

    @property
    def silo_count(self) -> int:
        return len(self.indices)

    @property
    def counts(self) -> np.ndarray:
        return np.array([len(i) for i in self.indices])

    def silo(self, dataset: Dataset, silo_id: int) -> Dataset:
        if not 0 <= silo_id < self.silo_count:
            raise IndexError(f"silo id {silo_id} out of range [0, {self.silo_count})")
        return dataset.subset(self.indices[silo_id])


def partition_dirichlet(
    dataset: Dataset, silo_count: int, alpha: float, seed: int = 0, min_per_silo: int = 1
) -> DatasetPartition:
    """Split each mode's samples across silos with Dirichlet(alpha) proportions.

    Small ``alpha`` concentrates each mode on few silos; large ``alpha``
    approaches an IID split. Silos left with fewer than ``min_per_silo``
    samples are topped up one sample at a time from the currently largest
    silo. Data with unknown modes (-1) is treated as one mode.
    """
    if silo_count < 2:
        raise ValueError("silo_count must be >= 2")
    if len(dataset) < silo_count * max(min_per_silo, 1):
        raise ValueError(f"dataset of {len(dataset)} samples cannot fill {silo_count} silos")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    rng = np.random.default_rng(seed)
    buckets: List[List[int]] = [[] for _ in range(silo_count)]
    for m in np.unique(dataset.modes):
        idx = rng.permutation(np.flatnonzero(dataset.modes == m))
        props = rng.dirichlet(np.full(silo_count, alpha))
        cuts = np.floor(np.cumsum(props)[:-1] * idx.size).astype(int)
        for silo, part in enumerate(np.split(idx, cuts)):
            buckets[silo].extend(part.tolist())
    for silo in range(silo_count):
        while len(buckets[silo]) < min_per_silo:
            donor = max(range(silo_count), key=lambda s: (len(buckets[s]), -s))
            buckets[donor].sort()
            buckets[silo].append(buckets[donor].pop())
    return DatasetPartition(tuple(buckets))


def partition_iid(dataset: Dataset, silo_count: int, seed: int = 0) -> DatasetPartition:
    """Uniformly shuffled, near-equal split."""
    idx = np.random.default_rng(seed).permutation(len(dataset))
    return DatasetPartition(tuple(np.array_split(idx, silo_count)))


# -- CSV ---------------------------------------------------------------------

def write_csv(dataset: Dataset, path) -> None:
    """Write ``f0..f{d-1},angle``; floats use repr so reading back is exact."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"f{k}" for k in range(dataset.input_dim)] + ["angle"])
        for x, y in zip(dataset.features, dataset.angles):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def load_csv(path) -> Dataset:
    """Read a ``f0,...,f{d-1},angle`` file; mode ids are set to -1."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        d = len(header) - 1
        if d < 1 or header != [f"f{k}" for k in range(d)] + ["angle"]:
            raise ValueError(f"{path}:1: header must be f0,...,f{{d-1}},angle")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}")
            try:
                values = [float(c) for c in row]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in values):
                raise ValueError(f"{path}:{lineno}: non-finite value")
            if abs(values[-1]) > MAX_ANGLE:
                raise ValueError(f"{path}:{lineno}: steering angle outside [-pi, pi]")
            rows.append(values)
    arr = np.array(rows, dtype=np.float64).reshape(-1, d + 1)
    return Dataset(arr[:, :d], arr[:, d], np.full(arr.shape[0], -1))


# -- diagnostics -------------------------------------------------------------

def silo_angle_histogram(partition: DatasetPartition, dataset: Dataset, silo_id: int, bins: int = 32) -> np.ndarray:
    """Normalized histogram of a silo's steering angles over [-pi, pi]."""
    angles = partition.silo(dataset, silo_id).angles
    counts, _ = np.histogram(angles, bins=bins, range=(-MAX_ANGLE, MAX_ANGLE))
    return counts / counts.sum()


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())
