"""Softmax regression and ReLU MLP trained with mini-batch SGD on cross-entropy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import NumericFailure

PROB_FLOOR = 1e-12
ARCHITECTURES = ("softmax", "mlp")


@dataclass(frozen=True)
class ModelConfig:
    architecture: str
    input_dim: int
    class_count: int
    hidden_dims: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}")
        if self.input_dim < 1:
            raise ValueError("input_dim must be at least 1")
        if self.class_count < 2:
            raise ValueError("class_count must be at least 2")
        if self.architecture == "mlp":
            if not self.hidden_dims or min(self.hidden_dims) < 1:
                raise ValueError("mlp needs non-empty positive hidden_dims")
        elif self.hidden_dims:
            raise ValueError("softmax regression takes no hidden_dims")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.class_count)

    @property
    def shape_tag(self) -> tuple:
        return (self.architecture, self.layer_dims)

    @property
    def param_count(self) -> int:
        dims = self.layer_dims
        return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """Flat, read-only model weights tagged with the architecture they belong to."""

    values: np.ndarray
    shape_tag: tuple

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise NumericFailure("parameter vector contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    def compatible(self, other: "ParameterVector") -> bool:
        return self.shape_tag == other.shape_tag

    def identical(self, other: "ParameterVector") -> bool:
        return self.shape_tag == other.shape_tag and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class TrainSettings:
    local_epochs: int = 1
    batch_size: int = 16
    learning_rate: float = 0.01
    lam: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must lie in [0, 1]")


def _layers(values: np.ndarray, config: ModelConfig):
    dims = config.layer_dims
    layers, offset = [], 0
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = values[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
        offset += fan_in * fan_out
        b = values[offset:offset + fan_out]
        offset += fan_out
        layers.append((w, b))
    return layers


def _check(params: ParameterVector, config: ModelConfig) -> None:
    if params.shape_tag != config.shape_tag or len(params) != config.param_count:
        raise ValueError(f"parameters tagged {params.shape_tag} do not fit {config.shape_tag}")


def _as_batch(features, config: ModelConfig) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != config.input_dim:
        raise ValueError(f"expected feature dimension {config.input_dim}, got shape {np.shape(features)}")
    return x


def init_model(config: ModelConfig, seed: int) -> ParameterVector:
    """Uniform weights in +-1/sqrt(fan_in), zero biases."""
    rng = np.random.default_rng(seed)
    chunks = []
    for fan_in, fan_out in zip(config.layer_dims[:-1], config.layer_dims[1:]):
        limit = 1.0 / np.sqrt(fan_in)
        chunks.append(rng.uniform(-limit, limit, fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return ParameterVector(np.concatenate(chunks), config.shape_tag)


def zeros_like_config(config: ModelConfig) -> ParameterVector:
    return ParameterVector(np.zeros(config.param_count), config.shape_tag)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_pass(values: np.ndarray, config: ModelConfig, x: np.ndarray):
    layers = _layers(values, config)
    activations = [x]
    h = x
    for w, b in layers[:-1]:
        h = np.maximum(h @ w + b, 0.0)
        activations.append(h)
    w, b = layers[-1]
    return _softmax(h @ w + b), activations, layers


def forward(params: ParameterVector, config: ModelConfig, features) -> np.ndarray:
    """Class probabilities; a single sample gives a 1-D row."""
    _check(params, config)
    single = np.ndim(features) == 1
    probs, _, _ = _forward_pass(params.values, config, _as_batch(features, config))
    return probs[0] if single else probs


def _cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = probs[np.arange(labels.shape[0]), labels]
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


def evaluate_loss(params: ParameterVector, config: ModelConfig, ds: Dataset) -> float:
    """Mean cross-entropy over ``ds``."""
    if len(ds) == 0:
        raise ValueError("cannot evaluate loss on an empty dataset")
    probs = forward(params, config, ds.features)
    return _cross_entropy(probs, ds.labels)


def _loss_and_grad(values: np.ndarray, config: ModelConfig, x: np.ndarray, y: np.ndarray):
    probs, activations, layers = _forward_pass(values, config, x)
    loss = _cross_entropy(probs, y)
    delta = probs.copy()
    delta[np.arange(y.shape[0]), y] -= 1.0
    delta /= y.shape[0]
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        a = activations[i]
        grads.append((a.T @ delta, delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ layers[i][0].T) * (a > 0)
    flat = []
    for gw, gb in reversed(grads):
        flat.append(gw.reshape(-1))
        flat.append(gb)
    return loss, np.concatenate(flat)


def _batch_arrays(batch, config: ModelConfig):
    if isinstance(batch, Dataset):
        x, y = batch.features, batch.labels
    else:
        x, y = batch
    x = _as_batch(x, config)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    if y.shape[0] != x.shape[0]:
        raise ValueError("batch features and labels differ in length")
    if y.shape[0] == 0:
        raise ValueError("batch must not be empty")
    if y.min() < 0 or y.max() >= config.class_count:
        raise ValueError("batch labels out of range")
    return x, y


def gradient(params: ParameterVector, config: ModelConfig, batch) -> ParameterVector:
    """Gradient of the mean cross-entropy over ``batch`` (a Dataset or ``(x, y)``)."""
    _check(params, config)
    x, y = _batch_arrays(batch, config)
    _, grad = _loss_and_grad(params.values, config, x, y)
    return ParameterVector(grad, config.shape_tag)


def adjusted_loss(local_loss: float, received_mean_loss: float, lam: float) -> float:
    """Local loss plus the lambda-weighted mean loss of the received models."""
    return local_loss + lam * received_mean_loss


def _run_epochs(values: np.ndarray, config: ModelConfig, train: Dataset, settings: TrainSettings):
    x_all, y_all = train.features, train.labels
    n = len(train)
    batch_losses: list[float] = []
    batch_index = 0
    for epoch in range(settings.local_epochs):
        rng = np.random.default_rng(np.random.SeedSequence(settings.seed, spawn_key=(epoch,)))
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, settings.batch_size):
            idx = order[start:start + settings.batch_size]
            loss, grad = _loss_and_grad(values, config, x_all[idx], y_all[idx])
            if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
                raise NumericFailure(f"non-finite loss at batch {batch_index}", batch_index)
            batch_losses.append(loss)
            values -= settings.learning_rate * grad
            batch_index += 1
    if not np.all(np.isfinite(values)):
        raise NumericFailure(f"parameters diverged by batch {batch_index - 1}", batch_index - 1)
    return values, batch_losses


def sgd_epochs(
    params: ParameterVector,
    config: ModelConfig,
    train: Dataset,
    settings: TrainSettings,
    correction: float = 0.0,
) -> tuple[ParameterVector, float, float]:
    """Run ``settings.local_epochs`` epochs of plain mini-batch SGD.

    Each epoch reshuffles with a stream derived from ``(settings.seed, epoch)``
    and keeps the final ragged batch. Batch losses are taken before each
    update; the returned train loss is their mean over the last epoch.

    ``correction`` enters only the reported adjusted loss. It is a constant
    with respect to the parameters, so it leaves every update untouched.
    """
    _check(params, config)
    if len(train) == 0:
        raise ValueError("cannot train on an empty dataset")
    if correction < 0:
        raise ValueError("correction must be non-negative")
    with np.errstate(over="ignore", invalid="ignore"):
        values, batch_losses = _run_epochs(params.values.copy(), config, train, settings)
    mean_loss = float(np.mean(batch_losses))
    return (
        ParameterVector(values, config.shape_tag),
        mean_loss,
        adjusted_loss(mean_loss, correction, settings.lam),
    )
