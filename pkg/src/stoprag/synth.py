"""Synthetic retrieval environments with known ground truth, and DP / clairvoyant oracles.

Each synthetic question needs ``h`` retrieval hops. Stopping at step ``t``
answers correctly with probability

    β·t/h              for t < h
    max(0, 1 − ρ(t−h)) for t ≥ h

so stopping early misses evidence and stopping late accumulates distractors.
Documents carry indicator tokens (``hops<h>``, ``partial``/``complete``) that
are corrupted with probability σ.
"""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import InvalidInputError
from .mdp import Document, EvidenceStep, RewardTable, TraceState, Trajectory

_FILLER = ("archive", "record", "census", "river", "museum", "treaty", "album", "league",
           "province", "novel", "station", "festival", "bridge", "dynasty", "harbor", "orchestra")
_SYLLABLES = ("ka", "lo", "mer", "vin", "tas", "dor", "eli", "run", "sa", "pho", "qui", "zen")
_QUERY = re.compile(r"^step (\d+) for: (.*)$", re.S)


@dataclass(frozen=True)
class SynthSpec:
    horizon: int = 5
    hop_probs: Mapping[int, float] = field(default_factory=lambda: {1: 0.25, 2: 0.25, 3: 0.25, 4: 0.25})
    beta: float = 0.3
    rho: float = 0.25
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise InvalidInputError("horizon must be >= 1")
        if not 0.0 <= self.beta < 1.0:
            raise InvalidInputError(f"beta must lie in [0, 1), got {self.beta}")
        if not 0.0 <= self.rho <= 1.0:
            raise InvalidInputError(f"rho must lie in [0, 1], got {self.rho}")
        if self.sigma < 0.0:
            raise InvalidInputError(f"sigma must be >= 0, got {self.sigma}")
        if not self.hop_probs:
            raise InvalidInputError("hop distribution is empty")
        for h, p in self.hop_probs.items():
            if int(h) < 1 or p < 0:
                raise InvalidInputError(f"invalid hop distribution entry {h}: {p}")
        total = sum(self.hop_probs.values())
        if abs(total - 1.0) > 1e-9:
            raise InvalidInputError(f"hop probabilities sum to {total}, not 1")

    @property
    def max_hops(self) -> int:
        return max(int(h) for h in self.hop_probs)


def reward_curve(h: int, t: int, beta: float, rho: float) -> float:
    """Probability that a final answer produced after ``t`` iterations is correct."""
    if t < h:
        return beta * t / h
    return max(0.0, 1.0 - rho * (t - h))


def _digest(text: str) -> str:
    return hashlib.blake2b(text.encode("utf-8"), digest_size=6).hexdigest()


def _rng(*parts: int) -> np.random.Generator:
    return np.random.default_rng([int(p) for p in parts])


def episode_hops(spec: SynthSpec, question: str) -> int:
    """Hop count of a question, a deterministic draw keyed by (spec seed, question)."""
    support = sorted(int(h) for h in spec.hop_probs)
    probs = np.array([spec.hop_probs[h] for h in support], dtype=float)
    rng = _rng(spec.seed, int(_digest(question), 16))
    return support[int(rng.choice(len(support), p=probs / probs.sum()))]


def gold_answer_for(question: str) -> str:
    rng = _rng(int(_digest("answer:" + question), 16))
    return " ".join("".join(rng.choice(_SYLLABLES, size=3)) for _ in range(2))


def doc_prefix(question: str) -> str:
    return "doc-" + _digest(question)


def gold_doc_ids(spec: SynthSpec, question: str) -> list[str]:
    prefix = doc_prefix(question)
    return [f"{prefix}-d{k}" for k in range(1, min(episode_hops(spec, question), spec.horizon) + 1)]


def generate_questions(spec: SynthSpec, n: int, split: str = "train") -> list[dict]:
    """Question corpus records ``{id, question, answer, gold_doc_ids}``."""
    records = []
    for i in range(n):
        qid = f"{split}-{i:06d}"
        rng = _rng(spec.seed, int(_digest(qid), 16))
        topic = " ".join(rng.choice(_FILLER, size=2))
        question = f"[{qid}] Which entity links the {topic} through its chain of facts?"
        records.append({
            "id": qid,
            "question": question,
            "answer": gold_answer_for(question),
            "gold_doc_ids": gold_doc_ids(spec, question),
        })
    return records


class SynthPipeline:
    """A pipeline whose hidden difficulty per question is its hop count."""

    wrong_answer = "unknown"

    def __init__(self, spec: SynthSpec):
        self.spec = spec
        self.corrupt_p = min(spec.sigma, 1.0)

    def generate_query(self, state: TraceState, seed: int) -> str:
        return f"step {state.t + 1} for: {state.question}"

    def _parse(self, query: str) -> tuple[int, str]:
        m = _QUERY.match(query)
        if not m:
            raise InvalidInputError(f"not a synthetic query: {query!r}")
        return int(m.group(1)), m.group(2)

    def _indicators(self, rng: np.random.Generator, h: int, t: int) -> list[str]:
        hop_tok = h
        if rng.random() < self.corrupt_p:
            hop_tok = int(rng.integers(1, self.spec.max_hops + 1))
        status = "complete" if t >= h else "partial"
        if rng.random() < self.corrupt_p:
            status = ("complete", "partial")[int(rng.integers(2))]
        return [f"hops{hop_tok}", status]

    def retrieve(self, query: str, k: int, seed: int) -> list[Document]:
        t, question = self._parse(query)
        h = episode_hops(self.spec, question)
        rng = _rng(seed)
        prefix = doc_prefix(question)
        top_id = f"{prefix}-d{t}" if t <= h else f"{prefix}-x{t}"
        words = self._indicators(rng, h, t) + list(rng.choice(_FILLER, size=3))
        docs = [Document(top_id, " ".join(words), 1.0)]
        for j in range(1, max(k, 1)):
            filler = " ".join(rng.choice(_FILLER, size=4))
            docs.append(Document(f"noise-{int(rng.integers(1 << 30))}", filler, float(0.9 * rng.random())))
        return docs

    def generate_intermediate_answer(self, query: str, documents: Sequence[Document], seed: int) -> str:
        t, _ = self._parse(query)
        return f"bridge entity {t}"

    def sample_answer(self, state: TraceState, trial_index: int, seed: int) -> str:
        h = episode_hops(self.spec, state.question)
        p = reward_curve(h, state.t, self.spec.beta, self.spec.rho)
        if _rng(seed, trial_index).random() < p:
            return gold_answer_for(state.question)
        return self.wrong_answer


def synth_pipeline(spec: SynthSpec) -> SynthPipeline:
    return SynthPipeline(spec)


# -- tabular instances and dynamic programming ----------------------------------

@dataclass(frozen=True)
class TabularSpec:
    """Fully observed states ``(t, h)`` with deterministic transitions ``t -> t+1``.

    ``r_stop[t, i]`` is the stop reward at step t for hop class ``hops[i]``
    (row 0 unused); ``r_cont_final[i]`` is the continue reward at ``T-1``.
    """

    horizon: int
    hops: tuple[int, ...]
    r_stop: np.ndarray
    r_cont_final: np.ndarray

    def __post_init__(self):
        if self.r_stop.shape != (self.horizon, len(self.hops)):
            raise InvalidInputError(f"r_stop must have shape {(self.horizon, len(self.hops))}")
        if self.r_cont_final.shape != (len(self.hops),):
            raise InvalidInputError("r_cont_final must have one entry per hop class")

    @classmethod
    def from_synth(cls, spec: SynthSpec) -> "TabularSpec":
        hops = tuple(sorted(int(h) for h in spec.hop_probs))
        T = spec.horizon
        r = np.full((T, len(hops)), np.nan)
        for i, h in enumerate(hops):
            for t in range(1, T):
                r[t, i] = reward_curve(h, t, spec.beta, spec.rho)
        final = np.array([reward_curve(h, T, spec.beta, spec.rho) for h in hops])
        return cls(T, hops, r, final)

    def features(self, t: int, i: int) -> np.ndarray:
        x = np.zeros(self.horizon * len(self.hops))
        x[t * len(self.hops) + i] = 1.0
        return x


def random_tabular(rng: np.random.Generator, horizon: int, n_hops: int = 3) -> TabularSpec:
    r = rng.random((horizon, n_hops))
    r[0] = np.nan
    return TabularSpec(horizon, tuple(range(1, n_hops + 1)), r, rng.random(n_hops))


def backward_induction(spec: TabularSpec) -> tuple[np.ndarray, np.ndarray]:
    """Optimal ``Q[t, i, a]`` (a=0 STOP, a=1 CONT) and ``V[t, i]`` for decision steps.

    Row ``t = 0`` is not a decision point and is left NaN.
    """
    T, n = spec.horizon, len(spec.hops)
    Q = np.full((T, n, 2), np.nan)
    V = np.full((T, n), np.nan)
    for t in range(T - 1, 0, -1):
        Q[t, :, 0] = spec.r_stop[t]
        Q[t, :, 1] = spec.r_cont_final if t == T - 1 else V[t + 1]
        V[t] = Q[t].max(axis=1)
    return Q, V


def tabular_trajectory(spec: TabularSpec, i: int, trajectory_id: str | None = None) -> Trajectory:
    """The deterministic chain of hop class ``i`` as a trajectory."""
    T = spec.horizon
    h = spec.hops[i]
    steps = tuple(
        EvidenceStep(f"step {t}", (Document(f"h{h}-t{t}", f"hops{h} step{t}", 1.0),), "")
        for t in range(1, T + 1)
    )
    rewards = RewardTable({t: float(spec.r_stop[t, i]) for t in range(1, T)},
                          float(spec.r_cont_final[i]))
    return Trajectory(trajectory_id or f"tab-h{h}", 0, f"tabular hop class {h}", None, steps, rewards)


# -- per-trajectory oracles -----------------------------------------------------

def clairvoyant_best(traj: Trajectory) -> float:
    """Best reward any stopping time could collect on this trajectory."""
    return max(traj.rewards.candidates())


def fixed_stop_reward(traj: Trajectory, t: int) -> float:
    """Reward credited when stopping after iteration ``t`` (``t = T`` runs to the end)."""
    return traj.rewards.final_cont if t == traj.horizon else traj.rewards.stop[t]


def best_fixed_stop(trajectories: Iterable[Trajectory]) -> tuple[int, float]:
    """Best single stopping step shared by every trajectory; ties go to the smaller t."""
    trajs = list(trajectories)
    if not trajs:
        raise InvalidInputError("best_fixed_stop needs at least one trajectory")
    T = trajs[0].horizon
    if any(tr.horizon != T for tr in trajs):
        raise InvalidInputError("trajectories have mixed horizons")
    best_t, best = 1, -np.inf
    for t in range(1, T + 1):
        value = float(np.mean([fixed_stop_reward(tr, t) for tr in trajs]))
        if value > best:
            best_t, best = t, value
    return best_t, best
