"""Fully connected network with categorical embeddings and exponential link."""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .tensor_engine import ETA_MAX, DimensionError, GradTape, exp_link, relu

DEFAULT_LAYERS = (32, 16, 8)
DEFAULT_EMBEDDING_DIM = 5


class StaleCacheError(RuntimeError):
    """A forward cache was used with parameters that changed since the forward pass."""


@dataclass(frozen=True)
class Architecture:
    n_continuous: int
    cardinalities: tuple[int, ...] = ()
    embedding_dims: tuple[int, ...] = ()
    layers: tuple[int, ...] = DEFAULT_LAYERS
    activation: str = "relu"
    link: str = "exp"

    def __post_init__(self):
        problems = []
        if len(self.layers) < 1 or any(q < 1 for q in self.layers):
            problems.append(f"layer sizes must be >= 1 and non-empty, got {self.layers}")
        if len(self.cardinalities) != len(self.embedding_dims):
            problems.append("one embedding dimension is needed per categorical column")
        for k, b in zip(self.cardinalities, self.embedding_dims):
            if not 1 <= b < k:
                problems.append(f"embedding dimension {b} must satisfy 1 <= b < K = {k}")
        if self.activation != "relu" or self.link != "exp":
            problems.append("only relu activation with exp link is supported")
        if problems:
            raise ValueError("; ".join(problems))

    @classmethod
    def for_schema(cls, schema, layers=DEFAULT_LAYERS, embedding_dim=DEFAULT_EMBEDDING_DIM):
        """Architecture matching ``schema``; embedding dims are capped at ``K - 1``."""
        cards = tuple(schema.cardinalities)
        return cls(
            n_continuous=len(schema.continuous),
            cardinalities=cards,
            embedding_dims=tuple(min(embedding_dim, k - 1) for k in cards),
            layers=tuple(layers),
        )

    @property
    def input_dim(self) -> int:
        return self.n_continuous + sum(self.embedding_dims)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.layers)

    def to_dict(self) -> dict:
        return {
            "n_continuous": self.n_continuous,
            "cardinalities": list(self.cardinalities),
            "embedding_dims": list(self.embedding_dims),
            "layers": list(self.layers),
            "activation": self.activation,
            "link": self.link,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(
            n_continuous=int(d["n_continuous"]),
            cardinalities=tuple(d["cardinalities"]),
            embedding_dims=tuple(d["embedding_dims"]),
            layers=tuple(d["layers"]),
            activation=d.get("activation", "relu"),
            link=d.get("link", "exp"),
        )


@dataclass
class NetworkParams:
    """Embedding tables, dense weights ``(q_i, q_{i-1})``, biases and the linear head."""

    arch: Architecture
    embeddings: list[np.ndarray]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    head_weight: np.ndarray
    head_bias: np.ndarray  # shape (1,)
    version: int = field(default=0, compare=False)

    def arrays(self) -> list[np.ndarray]:
        """All parameter arrays in a fixed order (shared with :class:`GradTape`)."""
        out = list(self.embeddings)
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out + [self.head_weight, self.head_bias]

    def touch(self) -> None:
        self.version += 1

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.arch,
            [e.copy() for e in self.embeddings],
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.head_weight.copy(),
            self.head_bias.copy(),
        )

    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays())

    def to_dict(self) -> dict:
        def enc(a):
            return {"shape": list(a.shape),
                    "data": base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode()}

        return {"format": "icenet-model/1", "architecture": self.arch.to_dict(),
                "parameters": [enc(a) for a in self.arrays()]}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkParams":
        arch = Architecture.from_dict(d["architecture"])
        arrays = [np.frombuffer(base64.b64decode(p["data"]), dtype="<f8").reshape(p["shape"]).astype(np.float64)
                  for p in d["parameters"]]
        params = zeros(arch)
        expected = [a.shape for a in params.arrays()]
        if [a.shape for a in arrays] != expected:
            raise DimensionError("parameter shapes do not match the architecture")
        for dst, src in zip(params.arrays(), arrays):
            dst[...] = src
        return params

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "NetworkParams":
        return cls.from_dict(json.loads(Path(path).read_text()))


def zeros(arch: Architecture) -> NetworkParams:
    dims = arch.dims
    return NetworkParams(
        arch,
        [np.zeros((k, b)) for k, b in zip(arch.cardinalities, arch.embedding_dims)],
        [np.zeros((dims[i + 1], dims[i])) for i in range(len(arch.layers))],
        [np.zeros(q) for q in arch.layers],
        np.zeros(arch.layers[-1]),
        np.zeros(1),
    )


def init(arch: Architecture, seed: int) -> NetworkParams:
    """Glorot-uniform dense weights, zero biases, N(0, 0.1^2) embeddings."""
    rng = np.random.default_rng(seed)
    params = zeros(arch)
    for e in params.embeddings:
        e[...] = rng.normal(0.0, 0.1, size=e.shape)
    for w in params.weights:
        limit = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        w[...] = rng.uniform(-limit, limit, size=w.shape)
    limit = np.sqrt(6.0 / (arch.layers[-1] + 1))
    params.head_weight[...] = rng.uniform(-limit, limit, size=arch.layers[-1])
    return params


@dataclass
class ForwardCache:
    params_id: int
    version: int
    x_cat: np.ndarray
    acts: list[np.ndarray]  # acts[0] is the network input
    pre: list[np.ndarray]
    eta: np.ndarray
    mu: np.ndarray


def _check_inputs(arch: Architecture, x_cont, x_cat):
    x_cont = np.asarray(x_cont, dtype=np.float64)
    x_cat = np.asarray(x_cat, dtype=np.int64)
    if x_cont.ndim == 1:
        x_cont = x_cont[None, :]
    if x_cat.ndim == 1:
        x_cat = x_cat.reshape(x_cont.shape[0], -1) if x_cat.size else np.zeros((x_cont.shape[0], 0), np.int64)
    if x_cont.shape[1] != arch.n_continuous or x_cat.shape[1] != len(arch.cardinalities):
        raise DimensionError(
            f"inputs have {x_cont.shape[1]} continuous / {x_cat.shape[1]} categorical columns, "
            f"architecture expects {arch.n_continuous} / {len(arch.cardinalities)}")
    if x_cont.shape[0] != x_cat.shape[0]:
        raise DimensionError("continuous and categorical inputs have different row counts")
    for t, k in enumerate(arch.cardinalities):
        col = x_cat[:, t]
        if col.size and (col.min() < 1 or col.max() > k):
            raise DimensionError(f"categorical column {t} has codes outside 1..{k}")
    return x_cont, x_cat


def forward(params: NetworkParams, x_cont, x_cat) -> tuple[np.ndarray, ForwardCache]:
    """Frequencies ``mu = exp(head(relu(...relu(W_1 z + b_1)...)))`` for each input row.

    ``z`` concatenates the continuous inputs and the embedding of every
    categorical code.  Returns ``mu`` of shape ``(n,)`` and the cache needed
    by :func:`backward`.
    """
    x_cont, x_cat = _check_inputs(params.arch, x_cont, x_cat)
    parts = [x_cont] + [e[x_cat[:, t] - 1] for t, e in enumerate(params.embeddings)]
    a = np.concatenate(parts, axis=1) if len(parts) > 1 else x_cont
    acts, pre = [a], []
    for w, b in zip(params.weights, params.biases):
        h = a @ w.T
        h += b
        pre.append(h)
        a = relu(h)
        acts.append(a)
    eta = a @ params.head_weight + params.head_bias[0]
    mu = exp_link(eta)
    return mu, ForwardCache(id(params), params.version, x_cat, acts, pre, eta, mu)


def backward(params: NetworkParams, cache: ForwardCache, dl_dmu) -> GradTape:
    """Gradient of a scalar loss with respect to every parameter.

    ``dl_dmu`` holds dL/dmu for each row of the forward pass.
    """
    if cache.params_id != id(params) or cache.version != params.version:
        raise StaleCacheError("forward cache does not belong to the current parameters")
    dl_dmu = np.asarray(dl_dmu, dtype=np.float64).reshape(-1)
    if dl_dmu.shape[0] != cache.mu.shape[0]:
        raise DimensionError("upstream gradient length does not match the forward batch")
    tape = GradTape.like(params.arrays())
    grads = tape.arrays
    n_emb = len(params.embeddings)

    # d mu / d eta = mu inside the clamp, 0 outside
    d_eta = np.where(np.abs(cache.eta) <= ETA_MAX, dl_dmu * cache.mu, 0.0)
    grads[-2][...] = d_eta @ cache.acts[-1]
    grads[-1][0] = d_eta.sum()
    delta = np.outer(d_eta, params.head_weight)
    for i in range(len(params.weights) - 1, -1, -1):
        delta *= cache.pre[i] > 0.0
        grads[n_emb + 2 * i][...] = delta.T @ cache.acts[i]
        grads[n_emb + 2 * i + 1][...] = delta.sum(axis=0)
        if i > 0 or n_emb:
            delta = delta @ params.weights[i]
    if n_emb:
        off = params.arch.n_continuous
        for t, b in enumerate(params.arch.embedding_dims):
            kernels.scatter_add_rows(grads[t], cache.x_cat[:, t] - 1, delta[:, off:off + b])
            off += b
    return tape


def predict(params: NetworkParams, x_cont, x_cat, chunk: int = 65536) -> np.ndarray:
    """Forward pass without keeping a cache, processed in row chunks."""
    n = np.asarray(x_cont).shape[0]
    out = np.empty(n)
    for s in range(0, n, chunk):
        out[s:s + chunk], _ = forward(params, x_cont[s:s + chunk], x_cat[s:s + chunk])
    return out
