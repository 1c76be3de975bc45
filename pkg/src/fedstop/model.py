"""Small classifiers with hand-written gradients.

Two model kinds are supported, both trained with mean cross-entropy:

* ``logreg``: multinomial logistic regression, logits = W x + b
* ``mlp``: one hidden tanh layer, logits = W2 tanh(W1 x + b1) + b2

Parameters live in a single flat float64 vector. The layout is layer-major
and row-major within a layer: for each layer the weight matrix of shape
``(out, in)`` comes first, followed by its bias of length ``out``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

__all__ = [
    "ModelSpec",
    "Batch",
    "param_dim",
    "layer_shapes",
    "unflatten",
    "init_params",
    "loss_and_grad",
    "evaluate",
    "predict",
]


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    input_dim: int
    num_classes: int
    hidden_dim: int = 0

    def __post_init__(self):
        if self.kind not in ("logreg", "mlp"):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.input_dim < 1:
            raise ConfigError("input_dim must be positive")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")
        if self.kind == "mlp" and self.hidden_dim < 1:
            raise ConfigError("mlp requires a positive hidden_dim")

    @property
    def dim(self) -> int:
        return param_dim(self)


class Batch(NamedTuple):
    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def take(self, idx) -> "Batch":
        return Batch(self.features[idx], self.labels[idx])


def layer_shapes(spec: ModelSpec) -> list[tuple[int, int]]:
    """(out, in) shape of every dense layer, input to output."""
    if spec.kind == "logreg":
        return [(spec.num_classes, spec.input_dim)]
    return [(spec.hidden_dim, spec.input_dim), (spec.num_classes, spec.hidden_dim)]


def param_dim(spec: ModelSpec) -> int:
    return sum(o * (i + 1) for o, i in layer_shapes(spec))


def unflatten(spec: ModelSpec, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Split a flat vector into ``[(W, b), ...]`` views (no copy)."""
    params = np.asarray(params, dtype=np.float64)
    if params.shape != (param_dim(spec),):
        raise DimensionError(f"expected {param_dim(spec)} parameters, got {params.shape}")
    layers = []
    pos = 0
    for out, inp in layer_shapes(spec):
        W = params[pos:pos + out * inp].reshape(out, inp)
        pos += out * inp
        b = params[pos:pos + out]
        pos += out
        layers.append((W, b))
    return layers


def init_params(spec: ModelSpec, seed) -> np.ndarray:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.

    ``seed`` may be an int, a ``SeedSequence`` or a ``Generator``.
    """
    rng = np.random.default_rng(seed)
    chunks = []
    for out, inp in layer_shapes(spec):
        bound = 1.0 / np.sqrt(inp)
        chunks.append(rng.uniform(-bound, bound, size=out * inp))
        chunks.append(np.zeros(out))
    return np.concatenate(chunks)


def _check_batch(spec: ModelSpec, batch: Batch) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(batch.features, dtype=np.float64)
    y = np.asarray(batch.labels)
    if X.ndim != 2 or X.shape[1] != spec.input_dim:
        raise DimensionError(f"features must be (n, {spec.input_dim}), got {X.shape}")
    if y.shape != (X.shape[0],) or X.shape[0] < 1:
        raise DimensionError("labels must be a non-empty vector matching features")
    return X, y.astype(np.intp, copy=False)


def _forward(spec, params, X):
    layers = unflatten(spec, params)
    with np.errstate(over="ignore", invalid="ignore"):
        if spec.kind == "logreg":
            W, b = layers[0]
            return X @ W.T + b, None
        (W1, b1), (W2, b2) = layers
        H = np.tanh(X @ W1.T + b1)
        return H @ W2.T + b2, H


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    # non-finite logits surface as NumericError in _cross_entropy
    with np.errstate(invalid="ignore", over="ignore"):
        shifted = logits - logits.max(axis=1, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _cross_entropy(logp: np.ndarray, y: np.ndarray) -> float:
    loss = -float(np.mean(logp[np.arange(y.shape[0]), y]))
    if not np.isfinite(loss):
        raise NumericError("non-finite loss")
    return loss


def loss_and_grad(spec: ModelSpec, params: np.ndarray, batch: Batch) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over ``batch`` and its exact gradient."""
    X, y = _check_batch(spec, batch)
    n = X.shape[0]
    logits, H = _forward(spec, params, X)
    logp = _log_softmax(logits)
    loss = _cross_entropy(logp, y)

    # d loss / d logits = (softmax - onehot) / n
    dz = np.exp(logp)
    dz[np.arange(n), y] -= 1.0
    dz /= n

    if spec.kind == "logreg":
        grad = np.concatenate([(dz.T @ X).ravel(), dz.sum(axis=0)])
    else:
        (_, _), (W2, _) = unflatten(spec, params)
        dW2 = dz.T @ H
        db2 = dz.sum(axis=0)
        dpre = (dz @ W2) * (1.0 - H * H)
        dW1 = dpre.T @ X
        db1 = dpre.sum(axis=0)
        grad = np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient")
    return loss, grad


def predict(spec: ModelSpec, params: np.ndarray, features: np.ndarray) -> np.ndarray:
    """Predicted class indices; ties go to the lowest class index."""
    X = np.asarray(features, dtype=np.float64)
    logits, _ = _forward(spec, params, X)
    return np.argmax(logits, axis=1)


def evaluate(spec: ModelSpec, params: np.ndarray, batch: Batch) -> tuple[float, float]:
    """Return ``(mean cross-entropy, accuracy)``."""
    X, y = _check_batch(spec, batch)
    logits, _ = _forward(spec, params, X)
    loss = _cross_entropy(_log_softmax(logits), y)
    # np.argmax returns the first maximal index
    acc = float(np.mean(np.argmax(logits, axis=1) == y))
    return loss, acc
