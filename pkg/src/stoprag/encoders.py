"""State encoders.

Encoders only look at the question and the retrieved document contents. Gold
answers, intermediate queries and intermediate answers never reach the
features.
"""
from __future__ import annotations

import hashlib
import re
from collections import Counter
from functools import lru_cache
from typing import Any, Mapping, Protocol

import numpy as np

from .errors import InvalidInputError
from .mdp import TraceState, Trajectory, make_prefix

_TOKEN = re.compile(r"\w+")


class Encoder(Protocol):
    dim: int

    def encode(self, state: TraceState) -> np.ndarray: ...

    def spec(self) -> dict[str, Any]: ...


@lru_cache(maxsize=1 << 16)
def _bucket(token: str, n_buckets: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % n_buckets


class HashedTokenEncoder:
    """Hashed bag of words over ``question [SEP] doc_1 [SEP] ... doc_t``.

    Question and document tokens hash into the same ``dim - 1`` buckets but
    carry different segment tags. Bucket counts are L2-normalized and the
    normalized step count ``t / T`` is appended as the last feature.
    """

    kind = "hashed"

    def __init__(self, dim: int = 512, horizon: int = 10):
        if dim < 2:
            raise InvalidInputError("hashed encoder needs dim >= 2")
        self.dim = dim
        self.horizon = horizon

    def _counts(self, state: TraceState) -> Counter:
        n = self.dim - 1
        counts = Counter(_bucket("q:" + tok, n) for tok in _TOKEN.findall(state.question.lower()))
        for step in state.steps:
            for doc in step.documents:
                counts.update(_bucket("d:" + tok, n) for tok in _TOKEN.findall(doc.content.lower()))
        return counts

    def encode(self, state: TraceState) -> np.ndarray:
        x = np.zeros(self.dim)
        for b, c in self._counts(state).items():
            x[b] = c
        norm = np.linalg.norm(x[:-1])
        if norm > 0:
            x[:-1] /= norm
        x[-1] = state.t / self.horizon
        return x

    def spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "dim": self.dim, "horizon": self.horizon}


_HOPS = re.compile(r"\bhops(\d+)\b")


class SynthPassthroughEncoder:
    """Reads the synthetic environment's indicator tokens straight into features.

    Layout: one-hot of the most frequent ``hops<k>`` indicator seen in the
    documents (``max_hops`` slots, all zero if none), the fraction of documents
    flagged ``complete``, whether any document is flagged ``complete``, and a
    one-hot of ``t`` (``horizon + 1`` slots).
    """

    kind = "passthrough"

    def __init__(self, horizon: int, max_hops: int | None = None):
        self.horizon = horizon
        self.max_hops = max_hops or horizon + 1
        self.dim = self.max_hops + 2 + horizon + 1

    def encode(self, state: TraceState) -> np.ndarray:
        x = np.zeros(self.dim)
        hops: Counter = Counter()
        n_docs = n_complete = 0
        for step in state.steps:
            for doc in step.documents:
                n_docs += 1
                hops.update(int(h) for h in _HOPS.findall(doc.content))
                n_complete += "complete" in doc.content.split()
        if hops:
            h = min(hops.most_common(), key=lambda kv: (-kv[1], kv[0]))[0]
            if 1 <= h <= self.max_hops:
                x[h - 1] = 1.0
        if n_docs:
            x[self.max_hops] = n_complete / n_docs
            x[self.max_hops + 1] = float(n_complete > 0)
        x[self.max_hops + 2 + min(state.t, self.horizon)] = 1.0
        return x

    def spec(self) -> dict[str, Any]:
        return {"kind": self.kind, "horizon": self.horizon, "max_hops": self.max_hops}


def encoder_from_spec(spec: Mapping[str, Any]) -> Encoder:
    kind = spec.get("kind")
    if kind == HashedTokenEncoder.kind:
        return HashedTokenEncoder(dim=int(spec.get("dim", 512)), horizon=int(spec["horizon"]))
    if kind == SynthPassthroughEncoder.kind:
        return SynthPassthroughEncoder(horizon=int(spec["horizon"]),
                                       max_hops=spec.get("max_hops"))
    raise InvalidInputError(f"unknown encoder kind {kind!r}")


def encode(encoder: Encoder, state: TraceState) -> np.ndarray:
    return encoder.encode(state)


def encode_prefixes(encoder: Encoder, traj: Trajectory) -> np.ndarray:
    """Features of every decision state s_1 .. s_{T-1}; row ``t - 1`` is s_t."""
    rows = [encoder.encode(make_prefix(traj, t)) for t in range(1, traj.horizon)]
    if not rows:
        return np.zeros((0, encoder.dim))
    return np.stack(rows)
