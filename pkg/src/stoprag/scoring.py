"""Answer scoring (EM / F1 / containment accuracy) and retrieval metrics.

Normalization follows the SQuAD convention, except that punctuation acts as a
token separator instead of being deleted.
"""
from __future__ import annotations

import re
import string
from collections import Counter
from typing import Callable, Iterable, Protocol

from .errors import InvalidInputError
from .mdp import TraceState

_PUNCT = re.compile("[" + re.escape(string.punctuation) + "]")
_ARTICLES = {"a", "an", "the"}


def normalize_answer(text: str | None) -> list[str]:
    if not text:
        return []
    text = _PUNCT.sub(" ", text.lower())
    return [tok for tok in text.split() if tok not in _ARTICLES]


def exact_match(pred: str, gold: str) -> int:
    return int(normalize_answer(pred) == normalize_answer(gold))


def f1_score(pred: str, gold: str) -> float:
    p, g = normalize_answer(pred), normalize_answer(gold)
    if not p or not g:
        return float(p == g)
    overlap = sum((Counter(p) & Counter(g)).values())
    if overlap == 0:
        return 0.0
    # 2PR/(P+R) with P = m/|p|, R = m/|g|, as a single rounding
    return 2 * overlap / (len(p) + len(g))


def accuracy_contains(pred: str, gold: str) -> int:
    p, g = normalize_answer(pred), normalize_answer(gold)
    if not g:
        return int(not p)
    n = len(g)
    return int(any(p[i:i + n] == g for i in range(len(p) - n + 1)))


SCORE_FUNCTIONS: dict[str, Callable[[str, str], float]] = {
    "EM": exact_match,
    "F1": f1_score,
    "ACC": accuracy_contains,
}


def get_score_function(name: str) -> Callable[[str, str], float]:
    try:
        return SCORE_FUNCTIONS[name.upper()]
    except KeyError:
        raise InvalidInputError(f"unknown score function {name!r}") from None


def retrieval_metrics(retrieved_ids: Iterable[str], gold_ids: Iterable[str]) -> tuple[float, float]:
    """Return (precision, recall) of retrieved document ids against the gold set."""
    gold = set(gold_ids)
    if not gold:
        raise InvalidInputError("gold document set is empty")
    retrieved = set(retrieved_ids)
    if not retrieved:
        return 0.0, 0.0
    hits = len(retrieved & gold)
    return hits / len(retrieved), hits / len(gold)


class AnswerSampler(Protocol):
    def __call__(self, state: TraceState, trial_index: int, seed: int) -> str: ...


def estimate_reward(
    state: TraceState,
    answer_sampler: AnswerSampler,
    n_trials: int = 8,
    score: Callable[[str, str], float] = f1_score,
    seed: int = 0,
) -> float:
    """Mean score of ``n_trials`` independent final answers generated from ``state``."""
    if n_trials < 1:
        raise InvalidInputError("n_trials must be >= 1")
    if state.gold_answer is None:
        raise InvalidInputError("reward estimation needs a gold answer")
    scores = [score(answer_sampler(state, i, seed), state.gold_answer) for i in range(n_trials)]
    return sum(scores) / n_trials
