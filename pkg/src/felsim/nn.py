"""Minimal dense binary-classification network with exact backprop.

The architecture family is fixed: up to three fully-connected hidden
layers whose widths shrink geometrically by a decay factor K, ReLU after
every hidden layer, sigmoid on the single output unit, binary
cross-entropy loss. Backprop is hand-derived for this family; the hot
loops live in :mod:`felsim._kernels`.

Parameter flattening order (used by gradients, optimizer steps, federated
deltas, and checkpoints): layer-major, each layer's weight matrix
(row-major, shape out x in) followed by its bias vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import impl as _impl
from .errors import InvalidConfigError, NumericError, ShapeMismatchError

MAX_HIDDEN_LAYERS = 3
LOSS_CLAMP = 1e-12
ADAGRAD_EPS = 1e-10


@dataclass
class MlpModel:
    """Dense network parameters plus layer-shape metadata."""

    layer_dims: list[int]
    params: np.ndarray  # flat float64 vector in the documented order

    def __post_init__(self):
        if len(self.layer_dims) < 2 or self.layer_dims[-1] != 1:
            raise InvalidConfigError(f"bad layer dims: {self.layer_dims}")
        expected = param_count(self.layer_dims)
        if self.params.shape != (expected,):
            raise ShapeMismatchError(
                f"params has shape {self.params.shape}, expected ({expected},)")

    @property
    def num_params(self) -> int:
        return self.params.size

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def last_hidden_dim(self) -> int:
        return self.layer_dims[-2]

    @property
    def weights(self) -> list[np.ndarray]:
        return [w for w, _ in self._layer_views()]

    @property
    def biases(self) -> list[np.ndarray]:
        return [b for _, b in self._layer_views()]

    def _layer_views(self):
        out = []
        off = 0
        for l in range(len(self.layer_dims) - 1):
            din, dout = self.layer_dims[l], self.layer_dims[l + 1]
            w = self.params[off:off + din * dout].reshape(dout, din)
            off += din * dout
            b = self.params[off:off + dout]
            off += dout
            out.append((w, b))
        return out

    def dims_array(self) -> np.ndarray:
        return np.asarray(self.layer_dims, dtype=np.int64)

    def copy(self) -> "MlpModel":
        return MlpModel(list(self.layer_dims), self.params.copy())

    @classmethod
    def from_layers(cls, weights, biases) -> "MlpModel":
        """Pack per-layer matrices/vectors into the flat representation."""
        dims = [np.asarray(weights[0]).shape[1]]
        parts = []
        for w, b in zip(weights, biases):
            w = np.asarray(w, dtype=np.float64)
            b = np.asarray(b, dtype=np.float64)
            if w.shape[0] != b.shape[0] or w.shape[1] != dims[-1]:
                raise ShapeMismatchError(f"layer shapes do not chain: {w.shape} vs {b.shape}")
            dims.append(w.shape[0])
            parts.append(w.ravel())
            parts.append(b)
        return cls(dims, np.concatenate(parts))


@dataclass
class ForwardTrace:
    """All post-activations of one forward pass."""

    activations: list[np.ndarray]  # activations[0] is the input
    last_hidden: np.ndarray
    prediction: float


@dataclass
class OptimizerState:
    """SGD or AdaGrad state; accumulators only exist for adagrad."""

    kind: str
    learning_rate: float
    accumulators: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.kind not in ("sgd", "adagrad"):
            raise InvalidConfigError(f"unknown optimizer kind: {self.kind!r}")
        if self.learning_rate <= 0:
            raise InvalidConfigError("learning_rate must be positive")


def param_count(layer_dims) -> int:
    return sum(layer_dims[l + 1] * layer_dims[l] + layer_dims[l + 1]
               for l in range(len(layer_dims) - 1))


def decay_layer_dims(input_dim: int, decay_k: int) -> list[int]:
    """Hidden widths input//K, input//K^2, ... capped at MAX_HIDDEN_LAYERS,
    dropping any width that falls to 1 or below, then the output unit."""
    dims = [input_dim]
    width = input_dim
    for _ in range(MAX_HIDDEN_LAYERS):
        width //= decay_k
        if width <= 1:
            break
        dims.append(width)
    dims.append(1)
    return dims


def build_mlp(input_dim: int, decay_k: int, init_seed: int) -> MlpModel:
    """Seeded model with uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    if input_dim < 1:
        raise InvalidConfigError(f"input_dim must be >= 1, got {input_dim}")
    if decay_k < 2:
        raise InvalidConfigError(f"decay_k must be >= 2, got {decay_k}")
    dims = decay_layer_dims(input_dim, decay_k)
    rng = np.random.default_rng(init_seed)
    parts = []
    for l in range(len(dims) - 1):
        din, dout = dims[l], dims[l + 1]
        limit = math.sqrt(6.0 / (din + dout))
        parts.append(rng.uniform(-limit, limit, size=din * dout))
        parts.append(np.zeros(dout))
    return MlpModel(dims, np.concatenate(parts))


def forward(model: MlpModel, x) -> ForwardTrace:
    """Hidden layers: affine + ReLU; output layer: affine + sigmoid."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.input_dim,):
        raise ShapeMismatchError(
            f"input has shape {x.shape}, model expects ({model.input_dim},)")
    if not np.all(np.isfinite(x)):
        raise NumericError("input contains non-finite values")
    flat = _impl.forward_trace(model.dims_array(), model.params, x)
    acts = []
    off = 0
    for d in model.layer_dims:
        acts.append(flat[off:off + d])
        off += d
    return ForwardTrace(activations=acts, last_hidden=acts[-2],
                        prediction=float(acts[-1][0]))


def bce_loss(prediction: float, label: int) -> float:
    """Binary cross-entropy with the prediction clamped away from {0, 1}."""
    p = min(max(float(prediction), LOSS_CLAMP), 1.0 - LOSS_CLAMP)
    y = float(label)
    return -(y * math.log(p) + (1.0 - y) * math.log(1.0 - p))


def _batch_arrays(model: MlpModel, batch):
    if len(batch) == 0:
        raise ValueError("batch must be nonempty")
    X = np.ascontiguousarray([np.asarray(x, dtype=np.float64) for x, _ in batch])
    y = np.asarray([float(label) for _, label in batch])
    if X.shape[1] != model.input_dim:
        raise ShapeMismatchError(
            f"batch features have width {X.shape[1]}, model expects {model.input_dim}")
    return X, y


def gradient(model: MlpModel, batch) -> np.ndarray:
    """Gradient of mean BCE loss over [(x, label), ...], flat."""
    X, y = _batch_arrays(model, batch)
    grad, _ = _impl.batch_grad(model.dims_array(), model.params, X, y)
    return grad


def gradient_and_loss(model: MlpModel, batch) -> tuple[np.ndarray, float]:
    X, y = _batch_arrays(model, batch)
    return _impl.batch_grad(model.dims_array(), model.params, X, y)


def apply_step(model: MlpModel, grad: np.ndarray,
               state: OptimizerState) -> tuple[MlpModel, OptimizerState]:
    """One optimizer step; returns the updated model and state (pure)."""
    if grad.shape != model.params.shape:
        raise ShapeMismatchError(
            f"gradient has shape {grad.shape}, expected {model.params.shape}")
    if state.kind == "sgd":
        params = model.params - state.learning_rate * grad
        return MlpModel(list(model.layer_dims), params), state
    acc = state.accumulators
    if acc is None:
        acc = np.zeros_like(model.params)
    acc = acc + grad * grad
    params = model.params - state.learning_rate * grad / (np.sqrt(acc) + ADAGRAD_EPS)
    return (MlpModel(list(model.layer_dims), params),
            OptimizerState("adagrad", state.learning_rate, acc))


def predict_batch(model: MlpModel, X) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized forward; returns (predictions, last-hidden matrix)."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ShapeMismatchError(
            f"batch has shape {X.shape}, model expects (n, {model.input_dim})")
    return _impl.predict_batch(model.dims_array(), model.params, X)
