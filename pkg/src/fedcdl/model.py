"""Residual MLP steering regressor and its Siamese backbone/sub-network pair.

The network maps a feature vector to ``(features, steering)``:

    h0 = relu(x W_in + b_in)
    h_{j+1} = h_j + relu(h_j W_{2j} + b_{2j}) W_{2j+1} + b_{2j+1}
    features = h W_feat + b_feat
    steering = features W_head + b_head

With a block's weights and biases zeroed the block is the identity.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Sequence, Tuple

import numpy as np

from . import autodiff as ad

__all__ = [
    "NetConfig",
    "ModelParams",
    "SiameseAgent",
    "init_net",
    "init_siamese",
    "forward_features",
    "predict",
    "AdamState",
    "adam_init",
    "adam_step",
    "save_params",
    "load_params",
    "params_to_bytes",
    "params_from_bytes",
]


@dataclass(frozen=True)
class NetConfig:
    input_dim: int = 16
    hidden_dim: int = 32
    residual_blocks: int = 3
    feature_dim: int = 16

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ValueError("input_dim and hidden_dim must be positive")
        if self.residual_blocks < 0:
            raise ValueError("residual_blocks must be non-negative")
        if self.feature_dim < 2:
            raise ValueError("feature_dim must be >= 2 so the feature softmax has two bins")

    def layer_shapes(self) -> List[Tuple[str, Tuple[int, ...]]]:
        """Parameter names and shapes in canonical order."""
        d, h, f = self.input_dim, self.hidden_dim, self.feature_dim
        shapes = [("input.weight.0", (d, h)), ("input.bias.0", (h,))]
        for j in range(self.residual_blocks):
            for k in (2 * j, 2 * j + 1):
                shapes += [(f"block.weight.{k}", (h, h)), (f"block.bias.{k}", (h,))]
        shapes += [
            ("feature.weight.0", (h, f)),
            ("feature.bias.0", (f,)),
            ("head.weight.0", (f, 1)),
            ("head.bias.0", (1,)),
        ]
        return shapes


class ModelParams:
    """Ordered, named collection of read-only float64 arrays."""

    __slots__ = ("names", "arrays")

    def __init__(self, items: Sequence[Tuple[str, np.ndarray]]):
        self.names: Tuple[str, ...] = tuple(name for name, _ in items)
        if len(set(self.names)) != len(self.names):
            raise ValueError("duplicate parameter names")
        self.arrays: Tuple[np.ndarray, ...] = tuple(ad.tensor(a) for _, a in items)

    def __len__(self):
        return len(self.names)

    def __iter__(self) -> Iterator[Tuple[str, np.ndarray]]:
        return iter(zip(self.names, self.arrays))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[self.names.index(name)]

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.names == other.names and all(
            a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.arrays, other.arrays)
        )

    def __repr__(self):
        return f"ModelParams({len(self)} tensors, {self.size} values)"

    @property
    def shapes(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(a.shape for a in self.arrays)

    @property
    def size(self) -> int:
        return int(sum(a.size for a in self.arrays))

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays])

    def unflatten(self, flat: np.ndarray) -> "ModelParams":
        """New params with this layout and values taken from ``flat``."""
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.size,):
            raise ValueError(f"expected {self.size} values, got shape {flat.shape}")
        out, start = [], 0
        for name, a in self:
            out.append((name, flat[start:start + a.size].reshape(a.shape)))
            start += a.size
        return ModelParams(out)

    def map(self, fn, *others: "ModelParams") -> "ModelParams":
        return ModelParams(
            [(n, fn(a, *(o.arrays[i] for o in others))) for i, (n, a) in enumerate(self)]
        )

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    def leaves(self, trainable: bool = True) -> List[ad.Node]:
        return [ad.Node(None, (), a, trainable=trainable, name=n) for n, a in self]


@dataclass
class SiameseAgent:
    """Backbone (aggregated, predicts steering) and sub-network (local anchor)."""

    backbone: ModelParams
    subnet: ModelParams
    config: NetConfig = field(default_factory=NetConfig)

    def __post_init__(self):
        if self.backbone.names != self.subnet.names or self.backbone.shapes != self.subnet.shapes:
            raise ValueError("backbone and sub-network must share names and shapes")


def init_net(config: NetConfig, seed: int) -> ModelParams:
    """Glorot-uniform weights, zero biases; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    items = []
    for name, shape in config.layer_shapes():
        if ".weight." in name:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            items.append((name, rng.uniform(-limit, limit, size=shape)))
        else:
            items.append((name, np.zeros(shape)))
    return ModelParams(items)


def init_siamese(config: NetConfig, seed: int) -> SiameseAgent:
    backbone = init_net(config, seed)
    return SiameseAgent(backbone=backbone, subnet=backbone.map(np.copy), config=config)


def _check_inputs(params: Sequence, inputs: np.ndarray):
    w_in = params[0].value if isinstance(params[0], ad.Node) else params[0]
    if inputs.ndim != 2 or inputs.shape[0] == 0 or inputs.shape[1] != w_in.shape[0]:
        raise ad.ShapeError(
            f"forward_features: expected inputs [m x {w_in.shape[0]}] with m >= 1, got {inputs.shape}"
        )


def _linear(x: ad.Node, w: ad.Node, b: ad.Node, ones: ad.Node) -> ad.Node:
    bias = ad.matmul(ones, ad.reshape(b, (1, b.shape[0])))
    return ad.add(ad.matmul(x, w), bias)


def forward_features(params, inputs) -> Tuple[ad.Node, ad.Node]:
    """Differentiable forward pass.

    Parameters
    ----------
    params : ModelParams or sequence of Node
        ``ModelParams`` are wrapped as constant leaves; pass
        ``params.leaves()`` to get gradients back from :func:`autodiff.backward`.
    inputs : array or Node, shape [m x input_dim]

    Returns
    -------
    features : Node, shape [m x feature_dim]
    steering : Node, shape [m x 1]
    """
    if isinstance(params, ModelParams):
        params = params.leaves(trainable=False)
    x = inputs if isinstance(inputs, ad.Node) else ad.constant(inputs)
    _check_inputs(params, x.value)
    ones = ad.constant(np.ones((x.shape[0], 1)))
    it = iter(params)
    h = ad.relu(_linear(x, next(it), next(it), ones))
    n_blocks = (len(params) - 6) // 4
    for _ in range(n_blocks):
        inner = ad.relu(_linear(h, next(it), next(it), ones))
        h = ad.add(h, _linear(inner, next(it), next(it), ones))
    features = _linear(h, next(it), next(it), ones)
    steering = _linear(features, next(it), next(it), ones)
    return features, steering


def predict(params: ModelParams, inputs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Graph-free numpy evaluation of :func:`forward_features`."""
    _check_inputs(params.arrays, np.asarray(inputs))
    a = params.arrays
    h = np.maximum(inputs @ a[0] + a[1], 0.0)
    k = 2
    while k < len(a) - 4:
        h = h + np.maximum(h @ a[k] + a[k + 1], 0.0) @ a[k + 2] + a[k + 3]
        k += 4
    features = h @ a[-4] + a[-3]
    return features, features @ a[-2] + a[-1]


# -- optimizer ---------------------------------------------------------------

@dataclass
class AdamState:
    m: ModelParams
    v: ModelParams
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_init(params: ModelParams) -> AdamState:
    return AdamState(m=params.zeros_like(), v=params.zeros_like())


def adam_step(
    params: ModelParams, grads: Sequence[np.ndarray], state: AdamState, lr: float
) -> Tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update; returns new params and state."""
    if len(grads) != len(params):
        raise ValueError("one gradient per parameter tensor is required")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    new_m, new_v, new_p = [], [], []
    for (name, p), m, v, g in zip(params, state.m.arrays, state.v.arrays, grads):
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, expected {p.shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_p.append((name, p - lr * m_hat / (np.sqrt(v_hat) + state.eps)))
        new_m.append((name, m))
        new_v.append((name, v))
    return ModelParams(new_p), AdamState(
        ModelParams(new_m), ModelParams(new_v), t, b1, b2, state.eps
    )


# -- binary checkpoint format ------------------------------------------------
# magic, u32 version, u32 count, then per tensor: u16 name length, utf-8 name,
# u8 ndim, u32 dims; then the concatenated little-endian float64 payload.

_MAGIC = b"FCDLPRM1"
_VERSION = 1


def params_to_bytes(params: ModelParams) -> bytes:
    header = [_MAGIC, struct.pack("<II", _VERSION, len(params))]
    for name, a in params:
        raw = name.encode("utf-8")
        header.append(struct.pack("<H", len(raw)) + raw)
        header.append(struct.pack(f"<B{a.ndim}I", a.ndim, *a.shape))
    payload = params.flatten().astype("<f8").tobytes()
    return b"".join(header) + payload


def params_from_bytes(blob: bytes) -> ModelParams:
    if blob[:8] != _MAGIC:
        raise ValueError("not a parameter file (bad magic)")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != _VERSION:
        raise ValueError(f"unsupported parameter file version {version}")
    off = 16
    layout = []
    for _ in range(count):
        (n,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off:off + n].decode("utf-8")
        off += n
        (ndim,) = struct.unpack_from("<B", blob, off)
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, off)
        off += 4 * ndim
        layout.append((name, tuple(shape)))
    flat = np.frombuffer(blob, dtype="<f8", offset=off).astype(np.float64)
    expected = sum(int(np.prod(s)) for _, s in layout)
    if flat.size != expected:
        raise ValueError(f"payload has {flat.size} values, header describes {expected}")
    items, start = [], 0
    for name, shape in layout:
        size = int(np.prod(shape))
        items.append((name, flat[start:start + size].reshape(shape)))
        start += size
    return ModelParams(items)


def save_params(params: ModelParams, path) -> None:
    Path(path).write_bytes(params_to_bytes(params))


def load_params(path) -> ModelParams:
    return params_from_bytes(Path(path).read_bytes())
