"""Margin-based stopping: stop once ``q_stop - q_cont`` exceeds a threshold."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .dataset import _ANSWER, _QUERY, _RETRIEVE, derive_seed
from .encoders import Encoder, encode_prefixes
from .errors import InvalidInputError, PipelineError
from .mdp import Action, EvidenceStep, TraceState, Trajectory
from .pipeline import Pipeline, select_top, with_retries
from .qfunction import QNetworkParams, forward

_FINAL = 5


@dataclass(frozen=True)
class PolicyConfig:
    threshold: float
    horizon: int
    encoder_spec: Mapping[str, Any] = field(default_factory=dict)
    checkpoint: str | None = None


@dataclass
class Decision:
    t: int
    q_stop: float
    q_cont: float
    action: Action


@dataclass
class EpisodeResult:
    question: str
    final_answer: str
    stop_t: int
    decisions: list[Decision]
    retrieved: list[list[str]]
    gold_answer: str | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decisions"] = [{**asdict(x), "action": x.action.value} for x in self.decisions]
        return d


def decide_from_q(q_stop: float, q_cont: float, threshold: float) -> Action:
    return Action.STOP if q_stop - q_cont > threshold else Action.CONT


def decide(params: QNetworkParams, encoder: Encoder, state: TraceState, threshold: float) -> Action:
    q_stop, q_cont = forward(params, encoder.encode(state))
    return decide_from_q(q_stop, q_cont, threshold)


def replay_from_margins(traj: Trajectory, margins: Sequence[float], threshold: float) -> tuple[int, float]:
    """Walk t = 1..T-1, stop at the first margin above ``threshold``.

    ``margins[t-1]`` belongs to s_t. Running out of decisions credits the
    final continue reward and reports ``stop_t = T``.
    """
    T = traj.horizon
    if len(margins) != T - 1:
        raise InvalidInputError(f"expected {T - 1} margins, got {len(margins)}")
    for t in range(1, T):
        if margins[t - 1] > threshold:
            return t, traj.rewards.stop[t]
    return T, traj.rewards.final_cont


def trajectory_margins(params: QNetworkParams, encoder: Encoder, traj: Trajectory,
                       features: np.ndarray | None = None) -> np.ndarray:
    X = encode_prefixes(encoder, traj) if features is None else features
    if len(X) == 0:
        return np.zeros(0)
    q = forward(params, X)
    return q[:, 0] - q[:, 1]


def replay_episode(trajectory: Trajectory, params: QNetworkParams, encoder: Encoder,
                   threshold: float) -> tuple[int, float]:
    return replay_from_margins(trajectory, trajectory_margins(params, encoder, trajectory), threshold)


def run_episode(
    pipeline: Pipeline,
    params: QNetworkParams,
    encoder: Encoder,
    cfg: PolicyConfig,
    question: str,
    seed: int,
    *,
    gold_answer: str | None = None,
    retrieve_k: int = 10,
    select_k: int = 1,
    retries: int = 2,
) -> EpisodeResult:
    """Run the live loop, consulting the margin rule after iterations 1..T-1."""
    T = cfg.horizon
    state = TraceState(question, None)
    decisions: list[Decision] = []
    retrieved: list[list[str]] = []

    def fail(exc: PipelineError):
        partial = EpisodeResult(question, "", state.t, decisions, retrieved, gold_answer)
        raise PipelineError(str(exc), partial=partial) from exc

    for t in range(1, T + 1):
        prev = state
        try:
            query = with_retries(lambda: pipeline.generate_query(prev, derive_seed(seed, t, _QUERY)),
                                 retries, f"query generation at t={t}")
            docs = with_retries(lambda: pipeline.retrieve(query, retrieve_k, derive_seed(seed, t, _RETRIEVE)),
                                retries, f"retrieval at t={t}")
            selected = select_top(docs, select_k)
            answer = with_retries(
                lambda: pipeline.generate_intermediate_answer(query, selected, derive_seed(seed, t, _ANSWER)),
                retries, f"intermediate answer at t={t}")
        except PipelineError as exc:
            fail(exc)
        state = state.extend(EvidenceStep(query, selected, answer))
        retrieved.append([d.doc_id for d in selected])
        if t == T:
            break
        q_stop, q_cont = (float(v) for v in forward(params, encoder.encode(state)))
        action = decide_from_q(q_stop, q_cont, cfg.threshold)
        decisions.append(Decision(t, q_stop, q_cont, action))
        if action is Action.STOP:
            break
    final = state
    try:
        final_answer = with_retries(lambda: pipeline.sample_answer(final, 0, derive_seed(seed, _FINAL)),
                                    retries, "final answer")
    except PipelineError as exc:
        fail(exc)
    return EpisodeResult(question, final_answer, state.t, decisions, retrieved, gold_answer)


def episode_retrieved_ids(result: EpisodeResult) -> list[str]:
    seen: dict[str, None] = {}
    for ids in result.retrieved:
        for doc_id in ids:
            seen.setdefault(doc_id, None)
    return list(seen)
