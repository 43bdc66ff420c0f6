"""Radar-presence detection from stacked KPM windows.

A small fully connected ReLU network (input K -> 32 -> 16 -> 2 softmax)
trained with mini-batch RMSprop on z-score-normalized features.  Everything
is plain numpy so the analytic gradients can be checked against finite
differences, and training is bit-deterministic for a fixed seed.

Feature order per KPM record: throughput_mbps, bler_pct, mcs, bsr_bytes.
Windows stack the latest N records oldest-first.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateDatasetError,
    DimensionMismatchError,
    InvalidParamsError,
)
from .ranlink import KpmRecord

KPM_FEATURES = ("throughput_mbps", "bler_pct", "mcs", "bsr_bytes")
N_FEATURES = len(KPM_FEATURES)
MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class KpmWindow:
    """Flattened stack of N consecutive KPM feature vectors (oldest first)."""

    features: np.ndarray
    n_stack: int
    n_features: int = N_FEATURES

    def __post_init__(self):
        arr = np.asarray(self.features, dtype=float).ravel()
        if arr.size != self.n_stack * self.n_features:
            raise InvalidParamsError("window length != n_stack * n_features")
        if not np.all(np.isfinite(arr)):
            raise InvalidParamsError("window features must be finite")
        object.__setattr__(self, "features", arr)


def record_features(record: KpmRecord) -> np.ndarray:
    return np.array([record.throughput_mbps, record.bler_pct,
                     float(record.mcs), float(record.bsr_bytes)])


def window_kpms(records: list[KpmRecord], n_stack: int) -> list[KpmWindow]:
    """Sliding windows over the record stream; first output after N records."""
    if n_stack < 1:
        raise InvalidParamsError("n_stack must be >= 1")
    feats = [record_features(r) for r in records]
    out = []
    for end in range(n_stack, len(feats) + 1):
        stacked = np.concatenate(feats[end - n_stack:end])
        out.append(KpmWindow(stacked, n_stack))
    return out


@dataclass
class ClassifierModel:
    """Feed-forward ReLU network with softmax head and frozen normalization."""

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    feat_mean: np.ndarray
    feat_std: np.ndarray

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feat_mean) / self.feat_std

    def forward(self, x_norm: np.ndarray) -> np.ndarray:
        """Softmax class probabilities for normalized inputs [batch, K]."""
        probs, _ = _forward_cached(self.weights, self.biases, np.atleast_2d(x_norm))
        return probs

    def predict_proba(self, x_raw: np.ndarray) -> np.ndarray:
        """Row-wise evaluation so batch and single inference are bit-identical
        (BLAS kernels vary with matrix shape otherwise)."""
        xn = self.normalize(np.atleast_2d(x_raw))
        return np.vstack([self.forward(row) for row in xn])

    def save(self, path) -> None:
        arrays = {
            "format_version": np.array(MODEL_FORMAT_VERSION),
            "layer_sizes": np.asarray(self.layer_sizes),
            "feat_mean": self.feat_mean,
            "feat_std": self.feat_std,
        }
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"W{i}"] = w
            arrays[f"b{i}"] = b
        np.savez(str(path), **arrays)

    @classmethod
    def load(cls, path) -> "ClassifierModel":
        path = str(path)
        if not Path(path).exists():
            raise FileNotFoundError(path)
        data = np.load(path)
        version = int(data["format_version"])
        if version != MODEL_FORMAT_VERSION:
            raise InvalidParamsError(f"unsupported model format version {version}")
        layer_sizes = tuple(int(v) for v in data["layer_sizes"])
        n_layers = len(layer_sizes) - 1
        return cls(
            layer_sizes=layer_sizes,
            weights=[data[f"W{i}"] for i in range(n_layers)],
            biases=[data[f"b{i}"] for i in range(n_layers)],
            feat_mean=data["feat_mean"],
            feat_std=data["feat_std"],
        )


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 50
    batch_size: int = 128
    train_fraction: float = 0.75
    hidden_sizes: tuple[int, ...] = (32, 16)
    rms_decay: float = 0.9
    rms_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidParamsError("train_fraction must be in (0, 1)")
        if min(self.learning_rate, self.epochs, self.batch_size) <= 0:
            raise InvalidParamsError("hyperparameters must be positive")


@dataclass(frozen=True)
class TrainResult:
    model: ClassifierModel
    train_accuracy: float
    val_accuracy: float


@dataclass(frozen=True)
class Detection:
    radar_present: bool
    confidence: float


def _forward_cached(weights, biases, x):
    """Returns (softmax probs, cache of pre/post activations for backprop)."""
    a = x
    cache = [(None, a)]
    n_layers = len(weights)
    for i in range(n_layers):
        z = a @ weights[i].T + biases[i]
        a = np.maximum(z, 0.0) if i < n_layers - 1 else z
        cache.append((z, a))
    logits = cache[-1][0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    return probs, cache


def loss_and_grads(weights, biases, x_norm, y):
    """Mean sparse categorical cross-entropy and its analytic gradients."""
    x_norm = np.atleast_2d(x_norm)
    y = np.asarray(y, dtype=int)
    n = x_norm.shape[0]
    probs, cache = _forward_cached(weights, biases, x_norm)
    loss = float(-np.mean(np.log(probs[np.arange(n), y] + 1e-300)))

    d_logits = probs.copy()
    d_logits[np.arange(n), y] -= 1.0
    d_logits /= n

    grads_w = [None] * len(weights)
    grads_b = [None] * len(weights)
    delta = d_logits
    for i in range(len(weights) - 1, -1, -1):
        a_prev = cache[i][1]
        grads_w[i] = delta.T @ a_prev
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            z_prev = cache[i][0]
            delta = (delta @ weights[i]) * (z_prev > 0)
    return loss, grads_w, grads_b


def _init_params(layer_sizes, rng):
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def train_detector(windows: list[KpmWindow], labels, config: TrainConfig = TrainConfig()
                   ) -> TrainResult:
    """Shuffle, split, fit normalization on the training split, run RMSprop."""
    y = np.asarray(labels, dtype=int)
    if len(windows) != y.size:
        raise InvalidParamsError("windows and labels length mismatch")
    if len(set(y.tolist())) < 2:
        raise DegenerateDatasetError("training data must contain both classes")
    if y.size < 2 * config.batch_size:
        raise DegenerateDatasetError(
            f"need at least {2 * config.batch_size} windows, got {y.size}")

    x = np.stack([w.features for w in windows])
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(y.size)
    x, y = x[order], y[order]
    n_train = int(round(config.train_fraction * y.size))
    x_train, y_train = x[:n_train], y[:n_train]
    x_val, y_val = x[n_train:], y[n_train:]

    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    std[std == 0.0] = 1.0  # zero-variance features pass through unscaled
    xn_train = (x_train - mean) / std
    xn_val = (x_val - mean) / std

    layer_sizes = (x.shape[1], *config.hidden_sizes, 2)
    weights, biases = _init_params(layer_sizes, rng)
    cache_w = [np.zeros_like(w) for w in weights]
    cache_b = [np.zeros_like(b) for b in biases]

    for _ in range(config.epochs):
        perm = rng.permutation(n_train)
        for start in range(0, n_train, config.batch_size):
            idx = perm[start:start + config.batch_size]
            _, gw, gb = loss_and_grads(weights, biases, xn_train[idx], y_train[idx])
            for i in range(len(weights)):
                cache_w[i] = (config.rms_decay * cache_w[i]
                              + (1 - config.rms_decay) * gw[i] ** 2)
                cache_b[i] = (config.rms_decay * cache_b[i]
                              + (1 - config.rms_decay) * gb[i] ** 2)
                weights[i] -= (config.learning_rate * gw[i]
                               / (np.sqrt(cache_w[i]) + config.rms_epsilon))
                biases[i] -= (config.learning_rate * gb[i]
                              / (np.sqrt(cache_b[i]) + config.rms_epsilon))

    model = ClassifierModel(layer_sizes, weights, biases, mean, std)
    train_acc = _accuracy(model, xn_train, y_train)
    val_acc = _accuracy(model, xn_val, y_val) if y_val.size else train_acc
    return TrainResult(model, train_acc, val_acc)


def _accuracy(model: ClassifierModel, x_norm, y) -> float:
    probs = model.forward(x_norm)
    return float(np.mean(np.argmax(probs, axis=1) == y))


def infer(model: ClassifierModel, window: KpmWindow) -> Detection:
    """Argmax of softmax; ties break toward 'no radar'."""
    if window.features.size != model.input_size:
        raise DimensionMismatchError(
            f"window length {window.features.size} != model input {model.input_size}")
    probs = model.predict_proba(window.features)[0]
    radar = bool(probs[1] > probs[0])  # strict: tie -> class 0, no radar
    return Detection(radar_present=radar, confidence=float(probs.max()))
