"""Compact MLP regressor trained natively: forward, backprop, Adam, early
stopping, deterministic seeding and JSON serialization.

Architecture: fully connected [C, 128, 64, 32, 1] with ReLU on the hidden
layers and a linear output. Loss is mean squared error plus an L2 penalty
on the weights only, alpha/(2N) * sum ||W_l||_F^2 with N the batch size;
the penalty convention is frozen so the finite-difference gradient oracle
is unambiguous. The ReLU subgradient at 0 is 0.

Training protocol (all randomness from the pinned generator, substreams
INIT/SPLIT/EPOCH of the config seed):
  1. seeded shuffle; the last `val_fraction` of shuffled rows becomes the
     internal validation split;
  2. the normalizer is fitted on the training portion only;
  3. minibatch Adam over seeded per-epoch shuffles, final partial batch
     kept;
  4. when validation MSE fails to improve by `tol` for 2 consecutive
     epochs, the learning rate is divided by `lr_decay_factor`;
  5. training stops early after `patience` epochs without a `tol`
     improvement, and the parameters of the best validation epoch are
     restored (also on the max-epoch stop);
  6. hard stop at `max_epochs`.
The recorded training loss of an epoch is the batch-size weighted mean of
its minibatch objectives; the validation loss is plain MSE (no penalty).

Model files are JSON; floats serialize with Python's shortest round-trip
decimal repr, so parameters reload bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    EmptyBatch,
    IoError,
    NonFiniteLoss,
    SchemaError,
    ShapeMismatch,
    TooFewRows,
)
from .features import (
    CHANNEL_NAMES,
    FeatureMatrix,
    Normalizer,
    apply_normalizer,
    fit_normalizer,
)
from .rng import EPOCH_STREAM, INIT_STREAM, SPLIT_STREAM, Xoshiro256pp, derive_seed

FORMAT_VERSION = 1
HIDDEN_WIDTHS = (128, 64, 32)
MIN_TRAIN_ROWS = 20


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    alpha: float = 0.01
    max_epochs: int = 500
    patience: int = 15
    val_fraction: float = 0.10
    batch_size: int = 200
    seed: int = 42
    tol: float = 1e-4
    lr_decay_factor: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0 or self.alpha < 0 or self.tol <= 0:
            raise ValueError("learning_rate/tol must be positive, alpha >= 0")
        if self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ValueError("max_epochs, patience and batch_size must be >= 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.lr_decay_factor <= 1.0:
            raise ValueError("lr_decay_factor must exceed 1")


@dataclass
class MlpParams:
    """Per-layer weights (out x in) and biases, float64."""

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MlpParams":
        return MlpParams(
            self.layer_sizes,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def check_compatible(self, other: "MlpParams") -> None:
        if self.layer_sizes != other.layer_sizes:
            raise ShapeMismatch(
                f"layer sizes differ: {self.layer_sizes} vs {other.layer_sizes}"
            )


@dataclass
class AdamState:
    """First/second-moment mirrors of every parameter plus the step count."""

    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, params: MlpParams) -> "AdamState":
        return cls(
            m_w=[np.zeros_like(w) for w in params.weights],
            v_w=[np.zeros_like(w) for w in params.weights],
            m_b=[np.zeros_like(b) for b in params.biases],
            v_b=[np.zeros_like(b) for b in params.biases],
        )


@dataclass
class TrainReport:
    epochs_run: int
    train_loss: list[float]
    val_loss: list[float]
    stop_reason: str  # "early_stop" | "max_epochs"
    final_learning_rate: float


@dataclass
class MlpModel:
    """Trained parameters bundled with their normalizer and provenance."""

    params: MlpParams
    normalizer: Normalizer
    channel_names: tuple[str, ...]
    config: TrainConfig
    seed: int
    train_report: TrainReport
    format_version: int = FORMAT_VERSION


def default_layer_sizes(n_inputs: int = len(CHANNEL_NAMES)) -> tuple[int, ...]:
    return (n_inputs,) + HIDDEN_WIDTHS + (1,)


def init_params(seed: int, layer_sizes: tuple[int, ...] | None = None) -> MlpParams:
    """Glorot-uniform weights (bounds +-sqrt(6/(fan_in+fan_out))), zero biases.

    Draws come from Xoshiro256pp(seed), layer by layer, row-major within
    each weight matrix.
    """
    sizes = tuple(layer_sizes) if layer_sizes is not None else default_layer_sizes()
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ShapeMismatch(f"invalid layer sizes {sizes}")
    gen = Xoshiro256pp(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        u = gen.uniforms(fan_out * fan_in)
        weights.append(((2.0 * u - 1.0) * bound).reshape(fan_out, fan_in))
        biases.append(np.zeros(fan_out))
    return MlpParams(sizes, weights, biases)


def _as_batch(x: np.ndarray, n_inputs: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != n_inputs:
        raise ShapeMismatch(f"input must be N x {n_inputs}, got shape {x.shape}")
    return x, single


def _forward_cached(params: MlpParams, x: np.ndarray):
    """Returns (predictions (N,), activations, pre-activations)."""
    acts = [x]
    pres = []
    a = x
    last = params.n_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        pres.append(z)
        a = z if l == last else np.maximum(z, 0.0)
        acts.append(a)
    return a[:, 0], acts, pres


def forward(params: MlpParams, x: np.ndarray) -> np.ndarray | float:
    """ReLU MLP forward pass; accepts one row or an N-row batch."""
    xb, single = _as_batch(x, params.layer_sizes[0])
    out, _, _ = _forward_cached(params, xb)
    return float(out[0]) if single else out


def _check_batch(x: np.ndarray, y: np.ndarray, n_inputs: int):
    x, _ = _as_batch(x, n_inputs)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape[0] == 0:
        raise EmptyBatch("batch must contain at least one row")
    if y.shape[0] != x.shape[0]:
        raise ShapeMismatch(f"{x.shape[0]} rows but {y.shape[0]} targets")
    return x, y


def loss(params: MlpParams, batch_x: np.ndarray, batch_y: np.ndarray,
         alpha: float) -> float:
    """MSE plus alpha/(2N) * sum of squared weights (biases excluded)."""
    x, y = _check_batch(batch_x, batch_y, params.layer_sizes[0])
    pred, _, _ = _forward_cached(params, x)
    n = x.shape[0]
    err = pred - y
    value = float(err @ err) / n
    if alpha != 0.0:
        penalty = sum(float((w * w).sum()) for w in params.weights)
        value += alpha / (2.0 * n) * penalty
    return value


def backward(params: MlpParams, batch_x: np.ndarray, batch_y: np.ndarray,
             alpha: float):
    """Exact gradients of `loss` w.r.t. every weight and bias."""
    _, grads_w, grads_b = _loss_and_grads(params, batch_x, batch_y, alpha)
    return grads_w, grads_b


def _loss_and_grads(params: MlpParams, batch_x, batch_y, alpha: float):
    x, y = _check_batch(batch_x, batch_y, params.layer_sizes[0])
    pred, acts, pres = _forward_cached(params, x)
    n = x.shape[0]
    err = pred - y
    value = float(err @ err) / n
    if alpha != 0.0:
        value += alpha / (2.0 * n) * sum(float((w * w).sum()) for w in params.weights)

    grads_w = [None] * params.n_layers
    grads_b = [None] * params.n_layers
    delta = (2.0 / n) * err.reshape(-1, 1)
    for l in range(params.n_layers - 1, -1, -1):
        gw = delta.T @ acts[l]
        if alpha != 0.0:
            gw += (alpha / n) * params.weights[l]
        grads_w[l] = gw
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = (delta @ params.weights[l]) * (pres[l - 1] > 0.0)
    return value, grads_w, grads_b


def adam_step(params: MlpParams, grads, state: AdamState, lr: float,
              *, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One Adam update with bias correction; params/state updated in place."""
    grads_w, grads_b = grads
    if len(grads_w) != params.n_layers or len(grads_b) != params.n_layers:
        raise ShapeMismatch("gradient layer count does not match parameters")
    for gw, w in zip(grads_w, params.weights):
        if gw.shape != w.shape:
            raise ShapeMismatch(f"gradient shape {gw.shape} != weight {w.shape}")
    state.t += 1
    t = state.t
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for l in range(params.n_layers):
        for g, p, m, v in (
            (grads_w[l], params.weights[l], state.m_w[l], state.v_w[l]),
            (grads_b[l], params.biases[l], state.m_b[l], state.v_b[l]),
        ):
            m *= beta1
            m += (1.0 - beta1) * g
            v *= beta2
            v += (1.0 - beta2) * (g * g)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


def train(config: TrainConfig, features: FeatureMatrix,
          layer_sizes: tuple[int, ...] | None = None):
    """Train on a feature matrix; returns (MlpModel, TrainReport)."""
    n = features.rows
    if n < MIN_TRAIN_ROWS:
        raise TooFewRows(f"training needs >= {MIN_TRAIN_ROWS} rows, got {n}")
    if layer_sizes is None:
        layer_sizes = default_layer_sizes(features.n_channels)
    if layer_sizes[0] != features.n_channels or layer_sizes[-1] != 1:
        raise ShapeMismatch(
            f"layer sizes {layer_sizes} do not fit {features.n_channels}-channel input"
        )

    split_gen = Xoshiro256pp(derive_seed(config.seed, SPLIT_STREAM))
    perm = split_gen.permutation(n)
    n_val = max(1, int(n * config.val_fraction))
    train_rows = perm[: n - n_val]
    val_rows = perm[n - n_val :]

    norm = fit_normalizer(features.subset(train_rows))
    x_train = norm.apply(features.data[train_rows])
    y_train = features.targets[train_rows]
    x_val = norm.apply(features.data[val_rows])
    y_val = features.targets[val_rows]
    n_train = x_train.shape[0]

    params = init_params(derive_seed(config.seed, INIT_STREAM), layer_sizes)
    state = AdamState.zeros(params)
    epoch_gen = Xoshiro256pp(derive_seed(config.seed, EPOCH_STREAM))

    lr = config.learning_rate
    best_val = math.inf
    best_params = params.copy()
    epochs_since_improvement = 0
    decay_streak = 0
    train_losses: list[float] = []
    val_losses: list[float] = []
    stop_reason = "max_epochs"
    epochs_run = 0

    for epoch in range(1, config.max_epochs + 1):
        order = epoch_gen.permutation(n_train)
        weighted = 0.0
        for start in range(0, n_train, config.batch_size):
            rows = order[start : start + config.batch_size]
            value, gw, gb = _loss_and_grads(
                params, x_train[rows], y_train[rows], config.alpha
            )
            if not math.isfinite(value):
                raise NonFiniteLoss(
                    f"non-finite batch loss at epoch {epoch}, batch offset {start}"
                )
            adam_step(params, (gw, gb), state, lr,
                      beta1=config.beta1, beta2=config.beta2, eps=config.eps)
            weighted += value * rows.size
        train_losses.append(weighted / n_train)

        val_pred, _, _ = _forward_cached(params, x_val)
        val_err = val_pred - y_val
        val_mse = float(val_err @ val_err) / val_err.size
        if not math.isfinite(val_mse):
            raise NonFiniteLoss(f"non-finite validation loss at epoch {epoch}")
        val_losses.append(val_mse)
        epochs_run = epoch

        if val_mse < best_val - config.tol:
            epochs_since_improvement = 0
            decay_streak = 0
        else:
            epochs_since_improvement += 1
            decay_streak += 1
        if val_mse < best_val:
            best_val = val_mse
            best_params = params.copy()

        if epochs_since_improvement >= config.patience:
            stop_reason = "early_stop"
            break
        if decay_streak >= 2:
            lr /= config.lr_decay_factor
            decay_streak = 0

    report = TrainReport(
        epochs_run=epochs_run,
        train_loss=train_losses,
        val_loss=val_losses,
        stop_reason=stop_reason,
        final_learning_rate=lr,
    )
    model = MlpModel(
        params=best_params,
        normalizer=norm,
        channel_names=features.channel_names,
        config=config,
        seed=config.seed,
        train_report=report,
    )
    return model, report


def predict(model: MlpModel, features) -> np.ndarray:
    """Normalize with the stored statistics and run the forward pass."""
    if isinstance(features, FeatureMatrix):
        if features.channel_names != model.channel_names:
            raise ShapeMismatch(
                "feature channel layout does not match the model's channel_layout"
            )
        data = features.data
    else:
        data = np.asarray(features, dtype=np.float64)
        if data.ndim == 1:
            data = data.reshape(1, -1)
    if data.shape[1] != model.params.layer_sizes[0]:
        raise ShapeMismatch(
            f"model expects {model.params.layer_sizes[0]} channels, got {data.shape[1]}"
        )
    out, _, _ = _forward_cached(model.params, model.normalizer.apply(data))
    return out


# ---------------------------------------------------------------------------
# model.json
# ---------------------------------------------------------------------------


def save_model(model: MlpModel, path: Path | str) -> None:
    """Serialize to JSON; float fields round-trip bit-exactly."""
    doc = {
        "format_version": model.format_version,
        "channel_layout": list(model.channel_names),
        "normalizer": {
            "mean": model.normalizer.mean.tolist(),
            "std": model.normalizer.std.tolist(),
        },
        "layers": [
            {
                "rows": w.shape[0],
                "cols": w.shape[1],
                "W": w.tolist(),
                "b": b.tolist(),
            }
            for w, b in zip(model.params.weights, model.params.biases)
        ],
        "config": asdict(model.config),
        "seed": model.seed,
        "train_report": {
            "epochs_run": model.train_report.epochs_run,
            "train_loss": model.train_report.train_loss,
            "val_loss": model.train_report.val_loss,
            "stop_reason": model.train_report.stop_reason,
            "final_learning_rate": model.train_report.final_learning_rate,
        },
    }
    try:
        with open(path, "w") as f:
            json.dump(doc, f, separators=(",", ":"))
            f.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write model to {path}: {exc}") from exc


def load_model(path: Path | str) -> MlpModel:
    """Parse and validate a model.json; raises ShapeMismatch on bad layouts."""
    try:
        with open(path) as f:
            doc = json.load(f)
    except FileNotFoundError as exc:
        raise IoError(f"model file not found: {path}") from exc
    except OSError as exc:
        raise IoError(f"cannot read model from {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from exc

    required = {"format_version", "channel_layout", "normalizer", "layers",
                "config", "seed", "train_report"}
    if not isinstance(doc, dict) or set(doc) != required:
        raise SchemaError(f"model document must have exactly the fields {sorted(required)}")
    if doc["format_version"] != FORMAT_VERSION:
        raise SchemaError(f"unsupported format_version {doc['format_version']}")

    channels = tuple(doc["channel_layout"])
    if not channels or not all(isinstance(c, str) for c in channels):
        raise SchemaError("channel_layout must be a list of channel names")

    norm_doc = doc["normalizer"]
    if set(norm_doc) != {"mean", "std"}:
        raise SchemaError("normalizer must carry exactly mean and std")
    mean = np.asarray(norm_doc["mean"], dtype=np.float64)
    std = np.asarray(norm_doc["std"], dtype=np.float64)
    if mean.shape != (len(channels),) or std.shape != (len(channels),):
        raise ShapeMismatch("normalizer length does not match channel_layout")
    normalizer = Normalizer(mean, std)

    layers = doc["layers"]
    if not isinstance(layers, list) or not layers:
        raise SchemaError("layers must be a non-empty array")
    weights, biases = [], []
    prev = len(channels)
    for i, layer in enumerate(layers):
        if set(layer) != {"rows", "cols", "W", "b"}:
            raise SchemaError(f"layers[{i}] must carry rows, cols, W, b")
        w = np.asarray(layer["W"], dtype=np.float64)
        b = np.asarray(layer["b"], dtype=np.float64)
        if w.ndim != 2 or w.shape != (layer["rows"], layer["cols"]):
            raise ShapeMismatch(f"layers[{i}].W does not match its declared shape")
        if w.shape[1] != prev:
            raise ShapeMismatch(
                f"layers[{i}] expects {w.shape[1]} inputs, previous layer emits {prev}"
            )
        if b.shape != (w.shape[0],):
            raise ShapeMismatch(f"layers[{i}].b does not match rows")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise SchemaError(f"layers[{i}] contains non-finite values")
        weights.append(w)
        biases.append(b)
        prev = w.shape[0]
    if prev != 1:
        raise ShapeMismatch("final layer must emit a single output")
    sizes = (len(channels),) + tuple(w.shape[0] for w in weights)
    params = MlpParams(sizes, weights, biases)

    try:
        config = TrainConfig(**doc["config"])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad config echo: {exc}") from exc
    tr = doc["train_report"]
    try:
        report = TrainReport(
            epochs_run=tr["epochs_run"],
            train_loss=list(tr["train_loss"]),
            val_loss=list(tr["val_loss"]),
            stop_reason=tr["stop_reason"],
            final_learning_rate=tr["final_learning_rate"],
        )
    except (TypeError, KeyError) as exc:
        raise SchemaError(f"bad train_report: {exc}") from exc

    return MlpModel(
        params=params,
        normalizer=normalizer,
        channel_names=channels,
        config=config,
        seed=doc["seed"],
        train_report=report,
        format_version=doc["format_version"],
    )
