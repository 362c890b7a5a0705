"""Two-head value network in numpy, its losses and gradients, AdamW and schedules.

Each head is an independent one-hidden-layer ReLU MLP ``D -> H -> 1`` reading
the same features. Outputs are linear (no squashing).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping

import numpy as np

from .errors import InvalidInputError, OutOfRangeError
from .mdp import TraceState

CHECKPOINT_VERSION = 1
HEADS = ("head_stop", "head_cont")
PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass
class QNetworkParams:
    head_stop: dict[str, np.ndarray]
    head_cont: dict[str, np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.head_stop["W1"].shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.head_stop["W1"].shape[1]

    def items(self) -> Iterator[tuple[str, str, np.ndarray]]:
        for head in HEADS:
            for name in PARAM_NAMES:
                yield head, name, getattr(self, head)[name]

    def map(self, fn: Callable[..., np.ndarray], *others: "QNetworkParams") -> "QNetworkParams":
        out = {}
        for head in HEADS:
            out[head] = {
                name: fn(getattr(self, head)[name], *(getattr(o, head)[name] for o in others))
                for name in PARAM_NAMES
            }
        return QNetworkParams(**out)

    def copy(self) -> "QNetworkParams":
        return self.map(np.copy)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for _, _, a in self.items()])

    def check_shapes(self, other: "QNetworkParams") -> None:
        for (h, n, a), (_, _, b) in zip(self.items(), other.items()):
            if a.shape != b.shape:
                raise InvalidInputError(f"shape mismatch at {h}.{n}: {a.shape} vs {b.shape}")


def _init_head(rng: np.random.Generator, d: int, h: int) -> dict[str, np.ndarray]:
    return {
        "W1": rng.normal(0.0, math.sqrt(2.0 / d), size=(d, h)),
        "b1": np.zeros(h),
        "W2": rng.normal(0.0, math.sqrt(1.0 / h), size=h),
        "b2": np.zeros(()),
    }


def init_params(input_dim: int, hidden_dim: int = 256, seed: int | np.random.Generator = 0) -> QNetworkParams:
    """He-scaled hidden layer, fan-in scaled output layer, zero biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return QNetworkParams(_init_head(rng, input_dim, hidden_dim),
                          _init_head(rng, input_dim, hidden_dim))


def zeros_like(params: QNetworkParams) -> QNetworkParams:
    return params.map(np.zeros_like)


def _as_batch(params: QNetworkParams, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    X = x[None, :] if x.ndim == 1 else x
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise InvalidInputError(f"expected features of dim {params.input_dim}, got shape {x.shape}")
    return X


def _head_forward(head: Mapping[str, np.ndarray], X: np.ndarray):
    z = X @ head["W1"] + head["b1"]
    h = np.maximum(z, 0.0)
    return h @ head["W2"] + head["b2"], z, h


def forward(params: QNetworkParams, x: np.ndarray) -> np.ndarray:
    """Q values for one feature vector (shape ``(2,)``) or a batch (``(B, 2)``).

    Column 0 is ``q_stop`` and column 1 is ``q_cont``.
    """
    X = _as_batch(params, x)
    q_stop = _head_forward(params.head_stop, X)[0]
    q_cont = _head_forward(params.head_cont, X)[0]
    out = np.stack([q_stop, q_cont], axis=-1)
    return out[0] if np.asarray(x).ndim == 1 else out


def margin(params: QNetworkParams, x: np.ndarray) -> np.ndarray:
    q = forward(params, x)
    return q[..., 0] - q[..., 1]


def _check_batch(params, X, y):
    X = _as_batch(params, X)
    y = np.asarray(y, dtype=float)
    if X.shape[0] == 0:
        raise InvalidInputError("empty batch")
    if y.shape[0] != X.shape[0]:
        raise InvalidInputError(f"{X.shape[0]} inputs but {y.shape[0]} targets")
    return X, y


def loss(params: QNetworkParams, X: np.ndarray, targets: np.ndarray) -> float:
    """Summed squared error of both heads; ``targets`` has shape ``(B, 2)``."""
    X, y = _check_batch(params, X, targets)
    q = forward(params, X)
    return float(np.sum((y - q) ** 2))


def _backprop_head(head, X, g) -> dict[str, np.ndarray]:
    _, z, h = _head_forward(head, X)
    dz = (g[:, None] * head["W2"][None, :]) * (z > 0)
    return {"W1": X.T @ dz, "b1": dz.sum(axis=0), "W2": h.T @ g, "b2": np.asarray(g.sum())}


def _backprop(params, X, g_stop, g_cont) -> QNetworkParams:
    return QNetworkParams(_backprop_head(params.head_stop, X, g_stop),
                          _backprop_head(params.head_cont, X, g_cont))


def gradient(params: QNetworkParams, X: np.ndarray, targets: np.ndarray) -> QNetworkParams:
    """Gradient of :func:`loss`; targets are constants."""
    X, y = _check_batch(params, X, targets)
    q = forward(params, X)
    g = 2.0 * (q - y)
    return _backprop(params, X, g[:, 0], g[:, 1])


def binary_loss(params: QNetworkParams, X: np.ndarray, labels: np.ndarray) -> float:
    """Summed binary cross-entropy of ``sigmoid(q_stop - q_cont)`` against stop labels."""
    X, y = _check_batch(params, X, labels)
    m = margin(params, X)
    return float(np.sum(np.logaddexp(0.0, m) - y * m))


def binary_gradient(params: QNetworkParams, X: np.ndarray, labels: np.ndarray) -> QNetworkParams:
    X, y = _check_batch(params, X, labels)
    m = margin(params, X)
    g = 0.5 * (1.0 + np.tanh(0.5 * m)) - y
    return _backprop(params, X, g, -g)


def frozen_evaluator(params: QNetworkParams, encoder) -> Callable[[TraceState], tuple[float, float]]:
    """Snapshot ``params`` and return a state -> (q_stop, q_cont) callable."""
    snapshot = params.copy()

    def evaluate(state: TraceState) -> tuple[float, float]:
        q = forward(snapshot, encoder.encode(state))
        return float(q[0]), float(q[1])

    return evaluate


# -- optimizer --------------------------------------------------------------

@dataclass
class AdamWState:
    step: int
    m: QNetworkParams
    v: QNetworkParams


def adamw_init(params: QNetworkParams) -> AdamWState:
    return AdamWState(0, zeros_like(params), zeros_like(params))


def optimizer_step(state: AdamWState, params: QNetworkParams, grad: QNetworkParams,
                   lr: float, weight_decay: float = 0.01,
                   betas: tuple[float, float] = (0.9, 0.999),
                   eps: float = 1e-8) -> tuple[AdamWState, QNetworkParams]:
    """One AdamW update with decoupled weight decay; returns new objects."""
    params.check_shapes(grad)
    params.check_shapes(state.m)
    b1, b2 = betas
    step = state.step + 1
    m = state.m.map(lambda m_, g: b1 * m_ + (1 - b1) * g, grad)
    v = state.v.map(lambda v_, g: b2 * v_ + (1 - b2) * g * g, grad)
    c1 = 1 - b1 ** step
    c2 = 1 - b2 ** step

    def update(p, m_, v_):
        p = p * (1 - lr * weight_decay)
        return p - lr * (m_ / c1) / (np.sqrt(v_ / c2) + eps)

    return AdamWState(step, m, v), params.map(update, m, v)


# -- schedules ----------------------------------------------------------------

def cosine_value(step: float, total: float, start: float, end: float) -> float:
    if total < 1 or not 0 <= step <= total:
        raise OutOfRangeError(f"cosine schedule needs 0 <= step <= total, total >= 1 (got {step}/{total})")
    return end + (start - end) * (1 + math.cos(math.pi * step / total)) / 2


@dataclass(frozen=True)
class LambdaSchedule:
    """λ per optimizer step: cosine from ``start`` at step 0 to ``end`` at the last step."""

    total_steps: int
    start: float = 1.0
    end: float = 0.1

    def __call__(self, step: int) -> float:
        if self.total_steps <= 1:
            return self.start
        return cosine_value(step, self.total_steps - 1, self.start, self.end)


@dataclass(frozen=True)
class LrSchedule:
    """Linear warmup over the first ``round(warmup_ratio * total)`` steps, then cosine to ``end``.

    Warmup steps ramp ``peak * (k+1) / (W+1)``; step ``W`` is the peak and the
    last step reaches ``end``.
    """

    total_steps: int
    peak: float
    warmup_ratio: float = 0.1
    end: float = 0.0

    @property
    def warmup_steps(self) -> int:
        return int(round(self.warmup_ratio * self.total_steps))

    def __call__(self, step: int) -> float:
        w = self.warmup_steps
        if step < w:
            return self.peak * (step + 1) / (w + 1)
        span = self.total_steps - 1 - w
        if span <= 0:
            return self.peak
        return cosine_value(step - w, span, self.peak, self.end)


# -- checkpoints ----------------------------------------------------------------

def params_to_dict(params: QNetworkParams) -> dict[str, Any]:
    return {head: {name: getattr(params, head)[name].tolist() for name in PARAM_NAMES}
            for head in HEADS}


def params_from_dict(d: Mapping[str, Any]) -> QNetworkParams:
    heads = {}
    for head in HEADS:
        heads[head] = {name: np.asarray(d[head][name], dtype=float) for name in PARAM_NAMES}
    params = QNetworkParams(**heads)
    for _, name, a in params.items():
        if not np.all(np.isfinite(a)):
            raise InvalidInputError(f"non-finite values in parameter {name}")
    return params


def checkpoint_bytes(params: QNetworkParams, encoder_spec: Mapping[str, Any],
                     training_meta: Mapping[str, Any] | None = None) -> bytes:
    record = {
        "version": CHECKPOINT_VERSION,
        "encoder_spec": dict(encoder_spec),
        "D": params.input_dim,
        "H": params.hidden_dim,
        **params_to_dict(params),
        "training_meta": dict(training_meta or {}),
    }
    return json.dumps(record, sort_keys=True).encode("utf-8")


def save_checkpoint(path: str | Path, params: QNetworkParams, encoder_spec: Mapping[str, Any],
                    training_meta: Mapping[str, Any] | None = None) -> None:
    Path(path).write_bytes(checkpoint_bytes(params, encoder_spec, training_meta))


def load_checkpoint(path: str | Path) -> tuple[QNetworkParams, dict, dict]:
    record = json.loads(Path(path).read_text())
    if record.get("version") != CHECKPOINT_VERSION:
        raise InvalidInputError(f"unsupported checkpoint version {record.get('version')!r}")
    params = params_from_dict(record)
    if (params.input_dim, params.hidden_dim) != (record["D"], record["H"]):
        raise InvalidInputError("checkpoint D/H disagree with weight shapes")
    return params, record["encoder_spec"], record.get("training_meta", {})
