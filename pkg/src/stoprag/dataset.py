"""Offline dataset construction: full-horizon rollouts, prefix decomposition, filtering."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InvalidInputError
from .jsonl import read_jsonl, write_jsonl
from .mdp import (
    Action,
    EpisodeConfig,
    EvidenceStep,
    RewardTable,
    TraceState,
    Trajectory,
    make_prefix,
    trajectory_from_dict,
    trajectory_to_dict,
)
from .pipeline import Pipeline, select_top, with_retries
from .scoring import estimate_reward, f1_score
from .targets import mc_target

# purpose tags for derived seeds
_QUERY, _RETRIEVE, _ANSWER, _REWARD = 1, 2, 3, 4


def derive_seed(*parts: int) -> int:
    """Deterministic 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def rollout(
    pipeline: Pipeline,
    question: str,
    gold: str,
    config: EpisodeConfig,
    seed: int,
    *,
    n_trials: int = 8,
    score: Callable[[str, str], float] = f1_score,
    score_name: str = "F1",
    retrieve_k: int = 10,
    select_k: int = 1,
    trajectory_id: str | None = None,
    gold_doc_ids: Sequence[str] = (),
    retries: int = 2,
) -> Trajectory:
    """Run the pipeline for exactly ``T`` iterations and estimate every reward.

    ``r(s_t, STOP)`` for t < T is the mean score of ``n_trials`` answers drawn
    from ``s_t``; ``r(s_{T-1}, CONT)`` is the same estimate drawn from ``s_T``.
    """
    T = config.horizon
    state = TraceState(question, gold)
    stop: dict[int, float] = {}
    final_cont = 0.0
    for t in range(1, T + 1):
        prev = state
        query = with_retries(lambda: pipeline.generate_query(prev, derive_seed(seed, t, _QUERY)),
                             retries, f"query generation at t={t}", partial=prev)
        docs = with_retries(lambda: pipeline.retrieve(query, retrieve_k, derive_seed(seed, t, _RETRIEVE)),
                            retries, f"retrieval at t={t}", partial=prev)
        selected = select_top(docs, select_k)
        answer = with_retries(
            lambda: pipeline.generate_intermediate_answer(query, selected, derive_seed(seed, t, _ANSWER)),
            retries, f"intermediate answer at t={t}", partial=prev)
        state = state.extend(EvidenceStep(query, selected, answer))
        cur = state
        r = with_retries(
            lambda: estimate_reward(cur, pipeline.sample_answer, n_trials, score, derive_seed(seed, t, _REWARD)),
            retries, f"reward estimation at t={t}", partial=cur)
        if t < T:
            stop[t] = r
        else:
            final_cont = r
    return Trajectory(
        trajectory_id=trajectory_id or f"traj-{seed}",
        seed=seed,
        question=question,
        gold_answer=gold,
        steps=state.steps,
        rewards=RewardTable(stop, final_cont),
        gold_doc_ids=tuple(gold_doc_ids),
        meta={"n_trials": n_trials, "score": score_name},
    )


@dataclass(frozen=True)
class OfflineDatapoint:
    trajectory_id: str
    t: int
    state: TraceState
    r_stop: float
    is_last_decision: bool


def decompose(trajectory: Trajectory) -> list[OfflineDatapoint]:
    T = trajectory.horizon
    try:
        trajectory.rewards.validate(T)
    except InvalidInputError as exc:
        raise InvalidInputError(f"trajectory {trajectory.trajectory_id}: {exc}") from None
    return [
        OfflineDatapoint(trajectory.trajectory_id, t, make_prefix(trajectory, t),
                         trajectory.rewards.stop[t], t == T - 1)
        for t in range(1, T)
    ]


@dataclass
class OfflineDataset:
    trajectories: dict[str, Trajectory] = field(default_factory=dict)
    datapoints: list[OfflineDatapoint] = field(default_factory=list)

    @classmethod
    def from_trajectories(cls, trajectories: Iterable[Trajectory]) -> "OfflineDataset":
        ds = cls()
        for traj in trajectories:
            if traj.trajectory_id in ds.trajectories:
                raise InvalidInputError(f"duplicate trajectory id {traj.trajectory_id!r}")
            ds.trajectories[traj.trajectory_id] = traj
            ds.datapoints.extend(decompose(traj))
        return ds

    def __len__(self) -> int:
        return len(self.datapoints)

    def steps_by_trajectory(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {tid: [] for tid in self.trajectories}
        for dp in self.datapoints:
            out[dp.trajectory_id].append(dp.t)
        return out


def is_uninformative(traj: Trajectory, t: int) -> bool:
    """Zero stop reward now and zero for every later stopping choice."""
    return traj.rewards.stop[t] == 0.0 and mc_target(traj, t, Action.CONT) == 0.0


def filter_dataset(dataset: OfflineDataset) -> OfflineDataset:
    kept = [dp for dp in dataset.datapoints
            if not is_uninformative(dataset.trajectories[dp.trajectory_id], dp.t)]
    return OfflineDataset(dict(dataset.trajectories), kept)


# -- files ------------------------------------------------------------------

def read_trajectories(path: str | Path) -> list[Trajectory]:
    return [trajectory_from_dict(rec) for rec in read_jsonl(path)]


def write_trajectories(path: str | Path, trajectories: Iterable[Trajectory]) -> int:
    return write_jsonl(path, (trajectory_to_dict(t) for t in trajectories))


def write_dataset(path: str | Path, dataset: OfflineDataset) -> int:
    """One line per trajectory: ``{trajectory, datapoints: [kept t ...]}``."""
    steps = dataset.steps_by_trajectory()
    return write_jsonl(path, ({"trajectory": trajectory_to_dict(traj), "datapoints": steps[tid]}
                              for tid, traj in dataset.trajectories.items()))


def read_dataset(path: str | Path) -> OfflineDataset:
    ds = OfflineDataset()
    for rec in read_jsonl(path):
        traj = trajectory_from_dict(rec["trajectory"])
        ds.trajectories[traj.trajectory_id] = traj
        by_t = {dp.t: dp for dp in decompose(traj)}
        for t in rec["datapoints"]:
            if t not in by_t:
                raise InvalidInputError(f"{traj.trajectory_id}: datapoint t={t} out of range")
            ds.datapoints.append(by_t[t])
    return ds
