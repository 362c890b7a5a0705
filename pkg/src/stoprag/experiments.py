"""In-memory synthetic experiments: rollout, build, train, tune, test replay."""
from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .dataset import OfflineDataset, derive_seed, filter_dataset, rollout
from .encoders import Encoder, HashedTokenEncoder, SynthPassthroughEncoder
from .mdp import EpisodeConfig, Trajectory
from .synth import SynthSpec, best_fixed_stop, clairvoyant_best, generate_questions, synth_pipeline
from .trainer import FeatureCache, Objective, TrainConfig, train, tune_threshold

SPLIT_CODES = {"train": 0, "val": 1, "test": 2}


def synth_trajectories(spec: SynthSpec, n: int, split: str, n_trials: int = 8,
                       root_seed: int = 0) -> list[Trajectory]:
    pipe = synth_pipeline(spec)
    config = EpisodeConfig(spec.horizon)
    out = []
    for i, rec in enumerate(generate_questions(spec, n, split)):
        out.append(rollout(pipe, rec["question"], rec["answer"], config,
                           derive_seed(root_seed, SPLIT_CODES.get(split, 9), i),
                           n_trials=n_trials, trajectory_id=rec["id"],
                           gold_doc_ids=rec["gold_doc_ids"]))
    return out


def make_encoder(kind: str, horizon: int, dim: int = 512, max_hops: int | None = None) -> Encoder:
    if kind == "hashed":
        return HashedTokenEncoder(dim=dim, horizon=horizon)
    if kind == "passthrough":
        return SynthPassthroughEncoder(horizon=horizon, max_hops=max_hops)
    raise ValueError(f"unknown encoder kind {kind!r}")


@dataclass
class SyntheticResult:
    objective: str
    seed: int
    policy_value: float
    clairvoyant_value: float
    fixed_stop_t: int
    fixed_stop_value: float
    threshold: float
    mean_stop_t: float
    seconds: float


def evaluate_on_test(params, encoder, test: Sequence[Trajectory], threshold: float):
    from .policy import replay_episode

    outcomes = [replay_episode(tr, params, encoder, threshold) for tr in test]
    return float(np.mean([r for _, r in outcomes])), float(np.mean([t for t, _ in outcomes]))


def run_synthetic(spec: SynthSpec, cfg: TrainConfig, sizes=(2000, 500, 500),
                  encoder_kind: str = "hashed", dim: int = 512, n_trials: int = 8,
                  data: dict | None = None) -> SyntheticResult:
    start = time.perf_counter()
    if data is None:
        data = {split: synth_trajectories(spec, n, split, n_trials, spec.seed)
                for split, n in zip(("train", "val", "test"), sizes)}
    encoder = make_encoder(encoder_kind, spec.horizon, dim, spec.max_hops)
    ds = filter_dataset(OfflineDataset.from_trajectories(data["train"]))
    val_features = FeatureCache(encoder, data["val"])
    params, report = train(ds, data["val"], cfg, encoder, val_features=val_features)
    tau, _ = tune_threshold(params, encoder, data["val"], cfg.threshold_grid, val_features)
    value, mean_t = evaluate_on_test(params, encoder, data["test"], tau)
    t_star, fixed = best_fixed_stop(data["test"])
    clair = float(np.mean([clairvoyant_best(tr) for tr in data["test"]]))
    return SyntheticResult(cfg.objective.value, cfg.seed, value, clair, t_star, fixed, tau, mean_t,
                           time.perf_counter() - start)


def ablation(spec: SynthSpec, base: TrainConfig, seeds: Sequence[int] = (0, 1, 2, 3, 4),
             objectives: Sequence[Objective] = (Objective.BINARY, Objective.MC,
                                                Objective.QLAMBDA, Objective.Q0),
             sizes=(600, 200, 200), encoder_kind: str = "hashed", dim: int = 512) -> dict:
    """Mean test replay reward per objective over seeds; data is regenerated per seed."""
    rows: list[SyntheticResult] = []
    for seed in seeds:
        seeded = replace(spec, seed=seed)
        data = {split: synth_trajectories(seeded, n, split, root_seed=seed)
                for split, n in zip(("train", "val", "test"), sizes)}
        for obj in objectives:
            cfg = replace(base, objective=obj, seed=seed)
            rows.append(run_synthetic(seeded, cfg, sizes, encoder_kind, dim, data=data))
    table = {}
    for obj in objectives:
        vals = [r.policy_value for r in rows if r.objective == Objective(obj).value]
        table[Objective(obj).value] = {"mean": float(np.mean(vals)), "std": float(np.std(vals)),
                                       "per_seed": vals}
    return {"objectives": table,
            "clairvoyant": float(np.mean([r.clairvoyant_value for r in rows])),
            "best_fixed": float(np.mean([r.fixed_stop_value for r in rows])),
            "rows": [vars(r) for r in rows]}
