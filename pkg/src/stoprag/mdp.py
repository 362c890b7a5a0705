"""Domain types for the finite-horizon iterative-retrieval MDP.

A state ``s_t`` is the question plus the evidence gathered by the first ``t``
retrieval iterations. ``STOP`` moves deterministically to an absorbing terminal
state; ``CONT`` runs one more iteration. States with ``t == T`` are terminal.
Decision points are ``t = 1 .. T-1``: the first iteration always runs.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .errors import InvalidInputError, OutOfRangeError


class Action(enum.Enum):
    STOP = "STOP"
    CONT = "CONT"


@dataclass(frozen=True)
class Document:
    doc_id: str
    content: str
    score: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise InvalidInputError(f"document {self.doc_id!r} has non-finite score")


@dataclass(frozen=True)
class EvidenceStep:
    """One retrieval iteration: query, selected documents, intermediate answer."""

    query: str
    documents: tuple[Document, ...]
    intermediate_answer: str = ""


@dataclass(frozen=True)
class TraceState:
    question: str
    gold_answer: str | None = None
    steps: tuple[EvidenceStep, ...] = ()

    @property
    def t(self) -> int:
        return len(self.steps)

    def extend(self, step: EvidenceStep) -> "TraceState":
        return TraceState(self.question, self.gold_answer, self.steps + (step,))


@dataclass(frozen=True)
class EpisodeConfig:
    horizon: int
    discount: float = 1.0

    def __post_init__(self):
        if self.horizon < 1:
            raise InvalidInputError(f"horizon must be >= 1, got {self.horizon}")
        if self.discount != 1.0:
            raise InvalidInputError("closed-form targets require discount == 1.0")


@dataclass(frozen=True)
class RewardTable:
    """``stop[t] = r(s_t, STOP)`` for t = 1..T-1 and ``final_cont = r(s_{T-1}, CONT)``."""

    stop: Mapping[int, float]
    final_cont: float

    def __post_init__(self):
        for t, r in self.stop.items():
            _check_unit(r, f"stop reward at t={t}")
        _check_unit(self.final_cont, "final continue reward")

    def validate(self, horizon: int) -> None:
        expected = set(range(1, horizon))
        if set(self.stop) != expected:
            raise InvalidInputError(
                f"stop reward keys {sorted(self.stop)} != {sorted(expected)}"
            )

    def stop_list(self, horizon: int) -> list[float]:
        """Stop rewards as a list indexed by t; index 0 is unused (NaN)."""
        return [math.nan] + [self.stop[t] for t in range(1, horizon)]

    def candidates(self) -> list[float]:
        """Every reward some stopping time can collect."""
        return [self.stop[t] for t in sorted(self.stop)] + [self.final_cont]


def _check_unit(value: float, what: str) -> None:
    if not (0.0 <= value <= 1.0):
        raise InvalidInputError(f"{what} must lie in [0, 1], got {value!r}")


@dataclass(frozen=True)
class Trajectory:
    trajectory_id: str
    seed: int
    question: str
    gold_answer: str | None
    steps: tuple[EvidenceStep, ...]
    rewards: RewardTable
    gold_doc_ids: tuple[str, ...] = ()
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.steps) < 1:
            raise InvalidInputError("trajectory must contain at least one step")
        self.rewards.validate(len(self.steps))

    @property
    def horizon(self) -> int:
        return len(self.steps)

    def stop_reward(self, t: int) -> float:
        return self.rewards.stop[t]


def make_prefix(trajectory: Trajectory, t: int) -> TraceState:
    if not 0 <= t <= trajectory.horizon:
        raise OutOfRangeError(f"prefix length {t} outside [0, {trajectory.horizon}]")
    return TraceState(trajectory.question, trajectory.gold_answer, trajectory.steps[:t])


def is_terminal(state: TraceState, config: EpisodeConfig, stopped: bool = False) -> bool:
    return stopped or state.t == config.horizon


# -- serialization ----------------------------------------------------------

def document_to_dict(doc: Document) -> dict:
    return {"doc_id": doc.doc_id, "content": doc.content, "score": doc.score}


def document_from_dict(d: Mapping) -> Document:
    return Document(str(d["doc_id"]), str(d["content"]), float(d.get("score", 0.0)))


def step_to_dict(step: EvidenceStep) -> dict:
    return {
        "query": step.query,
        "documents": [document_to_dict(d) for d in step.documents],
        "intermediate_answer": step.intermediate_answer,
    }


def step_from_dict(d: Mapping) -> EvidenceStep:
    return EvidenceStep(
        query=str(d["query"]),
        documents=tuple(document_from_dict(x) for x in d["documents"]),
        intermediate_answer=str(d.get("intermediate_answer", "")),
    )


def state_to_dict(state: TraceState) -> dict:
    return {
        "question": state.question,
        "gold_answer": state.gold_answer,
        "steps": [step_to_dict(s) for s in state.steps],
    }


def state_from_dict(d: Mapping) -> TraceState:
    return TraceState(
        question=str(d["question"]),
        gold_answer=d.get("gold_answer"),
        steps=tuple(step_from_dict(s) for s in d.get("steps", [])),
    )


def trajectory_to_dict(traj: Trajectory) -> dict:
    record = {
        "trajectory_id": traj.trajectory_id,
        "seed": traj.seed,
        "question": traj.question,
        "gold_answer": traj.gold_answer,
        "horizon": traj.horizon,
        "steps": [step_to_dict(s) for s in traj.steps],
        "rewards": {
            "stop": {str(t): traj.rewards.stop[t] for t in sorted(traj.rewards.stop)},
            "final_cont": traj.rewards.final_cont,
        },
    }
    if traj.gold_doc_ids:
        record["gold_doc_ids"] = list(traj.gold_doc_ids)
    if traj.meta:
        record["meta"] = dict(traj.meta)
    return record


def trajectory_from_dict(d: Mapping) -> Trajectory:
    steps = tuple(step_from_dict(s) for s in d["steps"])
    if "horizon" in d and int(d["horizon"]) != len(steps):
        raise InvalidInputError(
            f"trajectory {d.get('trajectory_id')!r}: horizon {d['horizon']} "
            f"but {len(steps)} steps"
        )
    rewards = RewardTable(
        stop={int(k): float(v) for k, v in d["rewards"]["stop"].items()},
        final_cont=float(d["rewards"]["final_cont"]),
    )
    return Trajectory(
        trajectory_id=str(d["trajectory_id"]),
        seed=int(d["seed"]),
        question=str(d["question"]),
        gold_answer=d.get("gold_answer"),
        steps=steps,
        rewards=rewards,
        gold_doc_ids=tuple(d.get("gold_doc_ids", ())),
        meta=dict(d.get("meta", {})),
    )


def retrieved_ids(steps: Sequence[EvidenceStep]) -> list[str]:
    """Document ids across steps, deduplicated, first occurrence order."""
    seen: dict[str, None] = {}
    for step in steps:
        for doc in step.documents:
            seen.setdefault(doc.doc_id, None)
    return list(seen)
