"""Small MLP feature extractor plus bias-free linear head, with hand-written gradients.

Shapes: a layer weight is ``(out, in)`` so a layer computes ``act(x @ W.T + b)``;
the head is ``(p, C)`` so logits are ``features @ head``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._rng import make_rng
from .errors import ConfigError, DimensionError, NonFiniteLossError
from .geometry import Projector
from .synthetic import FeatureMatrix

ACTIVATIONS = ("linear", "tanh", "relu")
OPTIMIZERS = ("gd", "momentum")
MOMENTUM = 0.9


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "linear"

    def __post_init__(self):
        self.weight = np.array(self.weight, dtype=np.float64)
        self.bias = np.array(self.bias, dtype=np.float64).ravel()
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise DimensionError(f"bias {self.bias.shape} does not match weight {self.weight.shape}")


@dataclass
class ToyModel:
    """Feature extractor ``layers`` and classifier ``head``.

    ``projection`` is an optional post-extractor stage (set by POUR-P): when
    present, features are ``P theta(x)``. ``masked_class`` is excluded from
    :func:`predict` so a projected-away class is never chosen.
    """

    layers: list[Layer]
    head: np.ndarray
    projection: Optional[Projector] = None
    masked_class: Optional[int] = None

    def __post_init__(self):
        self.head = np.array(self.head, dtype=np.float64)
        if not self.layers:
            raise DimensionError("extractor needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weight.shape[1] != prev.weight.shape[0]:
                raise DimensionError(
                    f"layer input {nxt.weight.shape[1]} != previous output {prev.weight.shape[0]}"
                )
        if self.head.ndim != 2 or self.head.shape[0] != self.feature_dim:
            raise DimensionError(f"head {self.head.shape} does not take features of dim {self.feature_dim}")
        if self.projection is not None and self.projection.dim != self.feature_dim:
            raise DimensionError("projection dimension differs from feature dim")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def feature_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    @property
    def class_count(self) -> int:
        return self.head.shape[1]

    def copy(self) -> ToyModel:
        return copy.deepcopy(self)

    def parameters(self, include_head: bool = True) -> list[np.ndarray]:
        """Parameter arrays in a fixed order (layer weights/biases, then head). Views, not copies."""
        params = [p for layer in self.layers for p in (layer.weight, layer.bias)]
        if include_head:
            params.append(self.head)
        return params

    def features(self, inputs) -> np.ndarray:
        return forward_features(self, inputs)


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 500
    step_size: float = 0.01
    batch_size: Optional[int] = None  # None: full batch
    seed: int = 0
    optimizer: str = "gd"
    weight_decay: float = 0.0
    update_clip: Optional[float] = None  # max global norm of one parameter update

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if not self.step_size > 0:
            raise ConfigError(f"step_size must be > 0, got {self.step_size}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be >= 0")
        if self.update_clip is not None and not self.update_clip > 0:
            raise ConfigError(f"update_clip must be > 0, got {self.update_clip}")


@dataclass
class Gradients:
    loss: float
    layers: list[tuple[np.ndarray, np.ndarray]]
    head: Optional[np.ndarray] = None

    def flat(self) -> list[np.ndarray]:
        out = [g for pair in self.layers for g in pair]
        if self.head is not None:
            out.append(self.head)
        return out


@dataclass
class TrainResult:
    model: ToyModel
    losses: list[float] = field(default_factory=list)
    snapshots: list[tuple[int, ToyModel]] = field(default_factory=list)


def init_model(
    input_dim: int,
    class_count: int,
    hidden_dim: int = 32,
    feature_dim: Optional[int] = None,
    seed: int = 0,
) -> ToyModel:
    """``input -> hidden (tanh) -> feature_dim (linear)`` plus head; Gaussian init, std ``1/sqrt(fan_in)``.

    ``feature_dim`` defaults to ``class_count - 1``.
    """
    p = class_count - 1 if feature_dim is None else feature_dim
    if p < 1 or hidden_dim < 1 or input_dim < 1:
        raise DimensionError("all dimensions must be >= 1")
    rng = make_rng(seed)

    def gauss(out_dim, in_dim):
        return rng.standard_normal((out_dim, in_dim)) / np.sqrt(in_dim)

    layers = [
        Layer(gauss(hidden_dim, input_dim), np.zeros(hidden_dim), "tanh"),
        Layer(gauss(p, hidden_dim), np.zeros(p), "linear"),
    ]
    return ToyModel(layers, gauss(class_count, p).T.copy())


def _inputs(model: ToyModel, inputs) -> np.ndarray:
    if isinstance(inputs, FeatureMatrix):
        inputs = inputs.rows
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DimensionError(f"expected inputs of shape (n, {model.input_dim}), got {x.shape}")
    return x


def _activate(name: str, pre: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(pre)
    if name == "relu":
        return np.maximum(pre, 0.0)
    return pre


def _forward_cache(model: ToyModel, x: np.ndarray) -> list[np.ndarray]:
    acts = [x]
    for layer in model.layers:
        acts.append(_activate(layer.activation, acts[-1] @ layer.weight.T + layer.bias))
    return acts


def encoder_features(model: ToyModel, inputs) -> np.ndarray:
    """Extractor output ``theta(x)``, ignoring any projection stage."""
    return _forward_cache(model, _inputs(model, inputs))[-1]


def forward_features(model: ToyModel, inputs) -> np.ndarray:
    """Features fed to the head: ``theta(x)``, or ``P theta(x)`` when a projection is attached."""
    z = encoder_features(model, inputs)
    return z if model.projection is None else model.projection.apply(z)


def forward_logits(model: ToyModel, inputs) -> np.ndarray:
    return forward_features(model, inputs) @ model.head


def predict(model: ToyModel, inputs) -> np.ndarray:
    """Argmax class per row; lowest index wins ties and ``masked_class`` never wins."""
    logits = forward_logits(model, inputs)
    if model.masked_class is not None:
        logits = logits.copy()
        logits[:, model.masked_class] = -np.inf
    return np.argmax(logits, axis=1)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _backprop(model: ToyModel, acts: list[np.ndarray], grad_features: np.ndarray):
    if model.projection is not None:
        grad_features = model.projection.apply(grad_features)  # P is symmetric
    g = grad_features
    grads = []
    for i in range(len(model.layers) - 1, -1, -1):
        layer = model.layers[i]
        out = acts[i + 1]
        if layer.activation == "tanh":
            g = g * (1.0 - out * out)
        elif layer.activation == "relu":
            g = g * (out > 0)
        grads.append((g.T @ acts[i], g.sum(axis=0)))
        g = g @ layer.weight
    grads.reverse()
    return grads


def backward_l2_feature_loss(model: ToyModel, inputs, targets) -> Gradients:
    """Loss ``mean_n |f(x_n) - t_n|^2`` and its exact gradient w.r.t. the extractor only."""
    x = _inputs(model, inputs)
    targets = np.asarray(targets, dtype=np.float64)
    acts = _forward_cache(model, x)
    z = acts[-1] if model.projection is None else model.projection.apply(acts[-1])
    if targets.shape != z.shape:
        raise DimensionError(f"targets {targets.shape} do not match features {z.shape}")
    diff = z - targets
    n = x.shape[0]
    loss = float(np.sum(diff * diff) / n)
    return Gradients(loss, _backprop(model, acts, 2.0 * diff / n))


def backward_cross_entropy(model: ToyModel, inputs, labels) -> Gradients:
    """Mean softmax cross-entropy over all ``C`` classes and its gradient (extractor and head)."""
    x = _inputs(model, inputs)
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if labels.shape[0] != x.shape[0]:
        raise DimensionError("one label per input row required")
    acts = _forward_cache(model, x)
    z = acts[-1] if model.projection is None else model.projection.apply(acts[-1])
    logits = z @ model.head
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    n = x.shape[0]
    rows = np.arange(n)
    loss = float(np.mean(log_norm - shifted[rows, labels]))
    dlogits = np.exp(shifted - log_norm[:, None])
    dlogits[rows, labels] -= 1.0
    dlogits /= n
    return Gradients(loss, _backprop(model, acts, dlogits @ model.head.T), z.T @ dlogits)


LossFn = Callable[[ToyModel, np.ndarray], Gradients]


def optimize(
    model: ToyModel,
    loss_fn: LossFn,
    n: int,
    config: TrainConfig,
    train_head: bool = True,
    ascent: bool = False,
    snapshot_every: Optional[int] = None,
) -> TrainResult:
    """Generic first-order loop on a private copy of ``model``.

    ``loss_fn(model, idx)`` returns the loss and gradients on the rows ``idx``.
    ``losses[k]`` is the (mini-batch) loss before update ``k``; one extra entry
    holds the full-data loss after the last update. With ``ascent`` the loss is
    maximised. Snapshots (step, model copy) are taken before the first update,
    every ``snapshot_every`` updates and after the last one.
    """
    model = model.copy()
    params = model.parameters(include_head=train_head)
    velocity = [np.zeros_like(p) for p in params]
    rng = make_rng(config.seed)
    full = np.arange(n)
    batch = n if config.batch_size is None else min(config.batch_size, n)
    order, cursor = full, n
    result = TrainResult(model)
    if snapshot_every:
        result.snapshots.append((0, model.copy()))
    sign = -1.0 if ascent else 1.0

    for step in range(config.steps):
        if batch == n:
            idx = full
        else:
            if cursor + batch > n:
                order, cursor = rng.permutation(n), 0
            idx = order[cursor:cursor + batch]
            cursor += batch
        grads = loss_fn(model, idx)
        if not np.isfinite(grads.loss):
            raise NonFiniteLossError(step, grads.loss)
        result.losses.append(grads.loss)
        flat = grads.flat()[: len(params)]
        updates = []
        for p, g, v in zip(params, flat, velocity):
            g = sign * g + config.weight_decay * p
            if config.optimizer == "momentum":
                v *= MOMENTUM
                v += g
                g = v
            updates.append(-config.step_size * g)
        if config.update_clip is not None:
            norm = np.sqrt(sum(float(np.sum(u * u)) for u in updates))
            if norm > config.update_clip:
                updates = [u * (config.update_clip / norm) for u in updates]
        for p, u in zip(params, updates):
            p += u
        if snapshot_every and ((step + 1) % snapshot_every == 0 or step + 1 == config.steps):
            result.snapshots.append((step + 1, model.copy()))

    final = loss_fn(model, full).loss
    if not np.isfinite(final):
        raise NonFiniteLossError(config.steps, final)
    result.losses.append(final)
    return result


def fit_cross_entropy(
    model: ToyModel,
    inputs: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    ascent: bool = False,
) -> TrainResult:
    x = _inputs(model, inputs)
    y = np.asarray(labels, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= model.class_count):
        raise ConfigError(f"labels must lie in [0, {model.class_count})")
    return optimize(
        model,
        lambda m, idx: backward_cross_entropy(m, x[idx], y[idx]),
        x.shape[0],
        config,
        ascent=ascent,
    )


def train_supervised(model: ToyModel, data: FeatureMatrix, config: TrainConfig) -> ToyModel:
    """Cross-entropy training of extractor and head; deterministic per ``config.seed``."""
    return fit_cross_entropy(model, data.rows, data.labels, config).model


def ncm_classify(means: np.ndarray, features) -> np.ndarray:
    """Nearest-class-mean label per row (squared Euclidean; lowest index wins ties)."""
    means = np.atleast_2d(np.asarray(means, dtype=np.float64))
    if means.shape[0] == 0:
        raise DimensionError("need at least one class mean")
    f = features.rows if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=np.float64)
    diff = f[:, None, :] - means[None, :, :]
    return np.argmin(np.sum(diff * diff, axis=2), axis=1)
