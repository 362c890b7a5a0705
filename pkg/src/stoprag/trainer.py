"""Offline training of the two-head Q-network on annealed Q(λ) targets.

Each optimizer step samples a batch of prefix datapoints, evaluates the
current network (no gradient) on the successor states of their trajectories,
builds targets for the chosen objective, takes one AdamW step on the summed
loss, then advances the λ and learning-rate schedules.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .dataset import OfflineDatapoint, OfflineDataset
from .encoders import Encoder, encode_prefixes
from .errors import InvalidInputError, NumericError
from .mdp import Trajectory
from .policy import replay_from_margins
from .qfunction import (
    LambdaSchedule,
    LrSchedule,
    QNetworkParams,
    adamw_init,
    binary_gradient,
    binary_loss,
    forward,
    gradient,
    init_params,
    loss,
    optimizer_step,
)
from .targets import binary_label, nstep_cont, q_lambda_cont

DEFAULT_GRID = tuple(float(x) for x in np.linspace(-1.0, 1.0, 41))


class Objective(str, enum.Enum):
    QLAMBDA = "QLAMBDA"
    MC = "MC"
    Q0 = "Q0"
    BINARY = "BINARY"


@dataclass
class TrainConfig:
    epochs: int = 3
    batch_size: int = 128
    peak_lr: float = 1e-3
    warmup_ratio: float = 0.1
    weight_decay: float = 0.01
    lambda_start: float = 1.0
    lambda_end: float = 0.1
    lambda_fixed: float | None = None
    hidden_dim: int = 256
    objective: Objective = Objective.QLAMBDA
    seed: int = 0
    threshold_grid: Sequence[float] = DEFAULT_GRID

    def __post_init__(self):
        self.objective = Objective(self.objective)
        if self.epochs < 1 or self.batch_size < 1 or self.hidden_dim < 1:
            raise InvalidInputError("epochs, batch_size and hidden_dim must be positive")
        if self.lambda_fixed is not None and not 0.0 <= self.lambda_fixed <= 1.0:
            raise InvalidInputError("lambda_fixed must lie in [0, 1]")


@dataclass
class StepRecord:
    step: int
    loss: float
    lam: float
    lr: float


@dataclass
class EpochRecord:
    epoch: int
    val_value: float
    threshold: float
    checkpoint_id: str


@dataclass
class TrainReport:
    steps: list[StepRecord] = field(default_factory=list)
    epochs: list[EpochRecord] = field(default_factory=list)
    selected_checkpoint: str | None = None
    selected_threshold: float | None = None
    checkpoints: dict[str, QNetworkParams] = field(default_factory=dict, repr=False)

    def summary(self) -> dict:
        return {
            "n_steps": len(self.steps),
            "final_loss": self.steps[-1].loss if self.steps else None,
            "epochs": [vars(e) for e in self.epochs],
            "selected_checkpoint": self.selected_checkpoint,
            "selected_threshold": self.selected_threshold,
        }


class FeatureCache:
    """Encoded decision states per trajectory; row ``t - 1`` holds s_t."""

    def __init__(self, encoder: Encoder, trajectories: Iterable[Trajectory]):
        self.encoder = encoder
        self.features = {tr.trajectory_id: encode_prefixes(encoder, tr) for tr in trajectories}

    def __getitem__(self, trajectory_id: str) -> np.ndarray:
        return self.features[trajectory_id]


def build_targets(frozen: QNetworkParams | None, dataset: OfflineDataset,
                  batch: Sequence[OfflineDatapoint], features: FeatureCache,
                  objective: Objective, lam: float) -> np.ndarray:
    """Regression targets ``(B, 2)`` for a batch; ``frozen`` supplies bootstraps.

    For ``BINARY`` the result is the ``(B,)`` vector of stop labels instead.
    """
    objective = Objective(objective)
    if objective is Objective.BINARY:
        return np.array([binary_label(dataset.trajectories[dp.trajectory_id], dp.t) for dp in batch],
                        dtype=float)
    needs_boot = objective is Objective.Q0 or (objective is Objective.QLAMBDA and lam < 1.0)
    boot: dict[str, list[float]] = {}
    if needs_boot:
        if frozen is None:
            raise InvalidInputError(f"{objective.value} targets need a frozen network")
        for tid in {dp.trajectory_id for dp in batch}:
            X = features[tid]
            vals = forward(frozen, X).max(axis=1) if len(X) else np.zeros(0)
            boot[tid] = [math.nan, *vals.tolist()]
    out = np.empty((len(batch), 2))
    for i, dp in enumerate(batch):
        traj = dataset.trajectories[dp.trajectory_id]
        T = traj.horizon
        stop_r = traj.rewards.stop_list(T)
        final = traj.rewards.final_cont
        t = dp.t
        if objective is Objective.QLAMBDA:
            cont = q_lambda_cont(stop_r, final, boot.get(dp.trajectory_id), t, lam, T)
        elif objective is Objective.MC:
            cont = nstep_cont(stop_r, final, None, t, T - t, T)
        else:
            cont = final if t == T - 1 else nstep_cont(stop_r, final, boot[dp.trajectory_id], t, 1, T)
        out[i] = stop_r[t], cont
    return out


def _trajectories(data: OfflineDataset | Iterable[Trajectory]) -> list[Trajectory]:
    if isinstance(data, OfflineDataset):
        return list(data.trajectories.values())
    return list(data)


def margin_matrix(params: QNetworkParams, trajectories: Sequence[Trajectory],
                  features: FeatureCache) -> list[np.ndarray]:
    out = []
    for tr in trajectories:
        X = features[tr.trajectory_id]
        if len(X):
            q = forward(params, X)
            out.append(q[:, 0] - q[:, 1])
        else:
            out.append(np.zeros(0))
    return out


def replay_policy_value(params: QNetworkParams, encoder: Encoder,
                        dataset: OfflineDataset | Iterable[Trajectory], threshold: float,
                        features: FeatureCache | None = None) -> float:
    """Mean reward the margin policy collects when replayed over stored trajectories."""
    trajs = _trajectories(dataset)
    if not trajs:
        raise InvalidInputError("replay needs at least one trajectory")
    features = features or FeatureCache(encoder, trajs)
    margins = margin_matrix(params, trajs, features)
    return float(np.mean([replay_from_margins(tr, m, threshold)[1] for tr, m in zip(trajs, margins)]))


def tune_threshold(params: QNetworkParams, encoder: Encoder,
                   valset: OfflineDataset | Iterable[Trajectory],
                   grid: Sequence[float] = DEFAULT_GRID,
                   features: FeatureCache | None = None) -> tuple[float, float]:
    """Grid point with the best replay value; ties go to the smallest threshold."""
    if len(grid) == 0:
        raise InvalidInputError("threshold grid is empty")
    trajs = _trajectories(valset)
    if not trajs:
        raise InvalidInputError("threshold tuning needs at least one trajectory")
    features = features or FeatureCache(encoder, trajs)
    margins = margin_matrix(params, trajs, features)
    best_tau, best = None, -math.inf
    for tau in sorted(grid):
        value = float(np.mean([replay_from_margins(tr, m, tau)[1] for tr, m in zip(trajs, margins)]))
        if value > best:
            best_tau, best = tau, value
    return float(best_tau), best


def train(dataset: OfflineDataset, valset: OfflineDataset | Iterable[Trajectory],
          cfg: TrainConfig, encoder: Encoder,
          train_features: FeatureCache | None = None,
          val_features: FeatureCache | None = None) -> tuple[QNetworkParams, TrainReport]:
    """Train and return the validation-best epoch checkpoint with its report."""
    if len(dataset) == 0:
        raise InvalidInputError("training dataset has no datapoints")
    val_trajs = _trajectories(valset)
    if not val_trajs:
        raise InvalidInputError("validation set has no trajectories")
    features = train_features or FeatureCache(encoder, dataset.trajectories.values())
    val_features = val_features or FeatureCache(encoder, val_trajs)

    rng = np.random.default_rng(cfg.seed)
    params = init_params(encoder.dim, cfg.hidden_dim, rng)
    opt = adamw_init(params)
    n = len(dataset.datapoints)
    per_epoch = math.ceil(n / cfg.batch_size)
    total = cfg.epochs * per_epoch
    lam_sched = LambdaSchedule(total, cfg.lambda_start, cfg.lambda_end)
    lr_sched = LrSchedule(total, cfg.peak_lr, cfg.warmup_ratio, 0.0)
    binary = cfg.objective is Objective.BINARY

    report = TrainReport()
    best_value = -math.inf
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for b in range(per_epoch):
            batch = [dataset.datapoints[i] for i in order[b * cfg.batch_size:(b + 1) * cfg.batch_size]]
            X = np.stack([features[dp.trajectory_id][dp.t - 1] for dp in batch])
            lam = cfg.lambda_fixed if cfg.lambda_fixed is not None else lam_sched(step)
            lr = lr_sched(step)
            y = build_targets(params, dataset, batch, features, cfg.objective, lam)
            if binary:
                value, grad = binary_loss(params, X, y), binary_gradient(params, X, y)
            else:
                value, grad = loss(params, X, y), gradient(params, X, y)
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss {value} at step {step} (epoch {epoch})")
            opt, params = optimizer_step(opt, params, grad, lr, cfg.weight_decay)
            report.steps.append(StepRecord(step, value, lam, lr))
            step += 1
        ckpt_id = f"epoch{epoch + 1}"
        tau, val_value = tune_threshold(params, encoder, val_trajs, cfg.threshold_grid, val_features)
        report.epochs.append(EpochRecord(epoch + 1, val_value, tau, ckpt_id))
        report.checkpoints[ckpt_id] = params.copy()
        if val_value > best_value:
            best_value = val_value
            report.selected_checkpoint = ckpt_id
            report.selected_threshold = tau
    return report.checkpoints[report.selected_checkpoint], report
