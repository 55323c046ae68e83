"""Recurrent sequence model for next-step KPM forecasting.

A single LSTM layer followed by a linear readout, implemented directly on
numpy arrays with analytic backpropagation through time. Given the ten most
recent normalized records of one UE, the model predicts the next record's
six measurement features; the detector turns the prediction error into an
anomaly score.

Weight layout: the four gate blocks (input, forget, cell, output) are
stacked row-wise in ``w_x``/``w_h``/``b``, in that order. Training is
full-batch and fully deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kpm import FEATURE_COUNT

SEQUENCE_LENGTH = 10


class TrainingError(RuntimeError):
    """Raised when optimisation produces a non-finite loss."""


@dataclass
class SequenceModel:
    """LSTM cell weights plus output projection.

    Shapes: w_x (4H, F), w_h (4H, H), b (4H,), w_out (F, H), b_out (F,).
    """

    w_x: np.ndarray
    w_h: np.ndarray
    b: np.ndarray
    w_out: np.ndarray
    b_out: np.ndarray
    hidden_size: int
    sequence_length: int = SEQUENCE_LENGTH
    feature_count: int = FEATURE_COUNT

    def __post_init__(self) -> None:
        h, f = self.hidden_size, self.feature_count
        expected = {
            "w_x": (4 * h, f),
            "w_h": (4 * h, h),
            "b": (4 * h,),
            "w_out": (f, h),
            "b_out": (f,),
        }
        for name, shape in expected.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite weights")

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "w_x": self.w_x,
            "w_h": self.w_h,
            "b": self.b,
            "w_out": self.w_out,
            "b_out": self.b_out,
        }


def init_model(hidden_size: int, rng: np.random.Generator,
               feature_count: int = FEATURE_COUNT,
               sequence_length: int = SEQUENCE_LENGTH) -> SequenceModel:
    """Small uniform init; forget-gate bias starts at 1 so early gradients
    flow through the cell state."""
    h, f = hidden_size, feature_count
    scale = 1.0 / np.sqrt(h)
    b = np.zeros(4 * h)
    b[h : 2 * h] = 1.0
    return SequenceModel(
        w_x=rng.uniform(-scale, scale, size=(4 * h, f)),
        w_h=rng.uniform(-scale, scale, size=(4 * h, h)),
        b=b,
        w_out=rng.uniform(-scale, scale, size=(f, h)),
        b_out=np.zeros(f),
        hidden_size=h,
        sequence_length=sequence_length,
        feature_count=f,
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _forward(model: SequenceModel, inputs: np.ndarray, keep_cache: bool):
    """Run the LSTM over (n, T, F) inputs; returns (n, F) predictions."""
    n, t_len, f = inputs.shape
    if t_len != model.sequence_length or f != model.feature_count:
        raise ValueError(
            f"inputs of shape {inputs.shape}, expected "
            f"(n, {model.sequence_length}, {model.feature_count})"
        )
    h_size = model.hidden_size
    h = np.zeros((n, h_size))
    c = np.zeros((n, h_size))
    cache = [] if keep_cache else None
    for t in range(t_len):
        x_t = inputs[:, t, :]
        z = x_t @ model.w_x.T + h @ model.w_h.T + model.b
        i = _sigmoid(z[:, :h_size])
        fgate = _sigmoid(z[:, h_size : 2 * h_size])
        g = np.tanh(z[:, 2 * h_size : 3 * h_size])
        o = _sigmoid(z[:, 3 * h_size :])
        c_next = fgate * c + i * g
        h_next = o * np.tanh(c_next)
        if keep_cache:
            cache.append((x_t, h, c, i, fgate, g, o, c_next))
        h, c = h_next, c_next
    predictions = h @ model.w_out.T + model.b_out
    return predictions, h, cache


def predict(model: SequenceModel, inputs: np.ndarray) -> np.ndarray:
    """Next-step feature predictions for a batch of windows."""
    predictions, _, _ = _forward(model, inputs, keep_cache=False)
    return predictions


def loss_and_grads(model: SequenceModel, inputs: np.ndarray,
                   targets: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean-squared next-step error and analytic gradients (BPTT)."""
    n = inputs.shape[0]
    h_size = model.hidden_size
    predictions, h_last, cache = _forward(model, inputs, keep_cache=True)
    diff = predictions - targets
    denom = diff.size
    loss = float(np.sum(diff * diff) / denom)

    d_pred = 2.0 * diff / denom
    grads = {
        "w_out": d_pred.T @ h_last,
        "b_out": d_pred.sum(axis=0),
        "w_x": np.zeros_like(model.w_x),
        "w_h": np.zeros_like(model.w_h),
        "b": np.zeros_like(model.b),
    }
    dh = d_pred @ model.w_out
    dc = np.zeros((n, h_size))
    for t in range(model.sequence_length - 1, -1, -1):
        x_t, h_prev, c_prev, i, fgate, g, o, c_next = cache[t]
        tanh_c = np.tanh(c_next)
        do = dh * tanh_c
        dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
        df = dc * c_prev
        di = dc * g
        dg = dc * i
        dc_prev = dc * fgate
        dz = np.concatenate(
            [
                di * i * (1.0 - i),
                df * fgate * (1.0 - fgate),
                dg * (1.0 - g * g),
                do * o * (1.0 - o),
            ],
            axis=1,
        )
        grads["w_x"] += dz.T @ x_t
        grads["w_h"] += dz.T @ h_prev
        grads["b"] += dz.sum(axis=0)
        dh = dz @ model.w_h
        dc = dc_prev
    return loss, grads


@dataclass(frozen=True)
class TrainConfig:
    hidden_size: int = 32
    epochs: int = 30
    learning_rate: float = 1e-3
    rng_seed: int = 0
    optimizer: str = "gd"  # "gd" (full-batch gradient descent) or "adam"


@dataclass
class TrainResult:
    model: SequenceModel
    epoch_losses: list[float] = field(default_factory=list)


def train_model(inputs: np.ndarray, targets: np.ndarray,
                config: TrainConfig) -> TrainResult:
    """Full-batch training on benign windows; deterministic for a seed.

    ``epoch_losses[k]`` is the loss at the start of epoch k, so a healthy
    run shows a decreasing sequence.
    """
    if config.optimizer not in ("gd", "adam"):
        raise ValueError(f"unknown optimizer {config.optimizer!r}")
    rng = np.random.default_rng(config.rng_seed)
    model = init_model(config.hidden_size, rng, feature_count=targets.shape[1],
                       sequence_length=inputs.shape[1])
    params = model.parameters()
    adam_m = {k: np.zeros_like(v) for k, v in params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in params.items()}
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    losses: list[float] = []
    for epoch in range(config.epochs):
        loss, grads = loss_and_grads(model, inputs, targets)
        if not np.isfinite(loss):
            raise TrainingError(
                f"non-finite loss at epoch {epoch}; lower the learning rate"
            )
        losses.append(loss)
        if config.optimizer == "gd":
            for name, param in params.items():
                param -= config.learning_rate * grads[name]
        else:
            step = epoch + 1
            for name, param in params.items():
                adam_m[name] = beta1 * adam_m[name] + (1 - beta1) * grads[name]
                adam_v[name] = beta2 * adam_v[name] + (1 - beta2) * grads[name] ** 2
                m_hat = adam_m[name] / (1 - beta1**step)
                v_hat = adam_v[name] / (1 - beta2**step)
                param -= config.learning_rate * m_hat / (np.sqrt(v_hat) + eps)
    return TrainResult(model=model, epoch_losses=losses)


def numerical_gradients(model: SequenceModel, inputs: np.ndarray,
                        targets: np.ndarray, step: float = 1e-5) -> dict[str, np.ndarray]:
    """Central finite differences over every parameter; tiny models only."""

    def loss_at() -> float:
        predictions = predict(model, inputs)
        diff = predictions - targets
        return float(np.sum(diff * diff) / diff.size)

    grads: dict[str, np.ndarray] = {}
    for name, param in model.parameters().items():
        grad = np.zeros_like(param)
        flat = param.reshape(-1)
        grad_flat = grad.reshape(-1)
        for idx in range(flat.size):
            original = flat[idx]
            flat[idx] = original + step
            upper = loss_at()
            flat[idx] = original - step
            lower = loss_at()
            flat[idx] = original
            grad_flat[idx] = (upper - lower) / (2.0 * step)
        grads[name] = grad
    return grads


def gradient_relative_error(analytic: dict[str, np.ndarray],
                            numeric: dict[str, np.ndarray]) -> float:
    """Worst per-tensor norm ratio ||ga - gn|| / max(||ga||, ||gn||)."""
    worst = 0.0
    for name, ga in analytic.items():
        gn = numeric[name]
        scale = max(float(np.linalg.norm(ga)), float(np.linalg.norm(gn)), 1e-12)
        worst = max(worst, float(np.linalg.norm(ga - gn)) / scale)
    return worst
