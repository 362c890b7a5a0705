"""The iterative-RAG pipeline contract and an HTTP client for remote pipelines.

Every call takes an explicit seed; equal seeds must reproduce equal outputs.
"""
from __future__ import annotations

import os
import time
from typing import Any, Callable, Protocol, Sequence, TypeVar

import httpx

from .errors import PipelineError
from .mdp import Document, TraceState, document_from_dict, document_to_dict, state_to_dict

PIPELINE_URL_ENV = "STOPRAG_PIPELINE_URL"

T = TypeVar("T")


class Pipeline(Protocol):
    def generate_query(self, state: TraceState, seed: int) -> str: ...

    def retrieve(self, query: str, k: int, seed: int) -> list[Document]: ...

    def generate_intermediate_answer(self, query: str, documents: Sequence[Document], seed: int) -> str: ...

    def sample_answer(self, state: TraceState, trial_index: int, seed: int) -> str: ...


def select_top(documents: Sequence[Document], n: int = 1) -> tuple[Document, ...]:
    """Highest-scoring ``n`` documents; ties keep retrieval order."""
    order = sorted(range(len(documents)), key=lambda i: -documents[i].score)
    return tuple(documents[i] for i in order[:n])


def with_retries(fn: Callable[[], T], retries: int, what: str, partial: Any = None,
                 backoff: float = 0.0) -> T:
    last: Exception | None = None
    for attempt in range(retries + 1):
        try:
            return fn()
        except Exception as exc:  # noqa: BLE001 - any pipeline failure is retried
            last = exc
            if backoff and attempt < retries:
                time.sleep(backoff * 2 ** attempt)
    raise PipelineError(f"{what} failed after {retries + 1} attempts: {last}", partial=partial) from last


class RemotePipeline:
    """Client for a pipeline served over HTTP.

    Endpoints (all POST, JSON bodies):

    * ``/query``    ``{state, seed}`` -> ``{query}``
    * ``/retrieve`` ``{query, k, seed}`` -> ``{documents: [{doc_id, content, score}]}``
    * ``/answer``   ``{kind: "intermediate", query, documents, seed}`` or
      ``{kind: "final", state, trial_index, seed}`` -> ``{answer}``
    """

    def __init__(self, base_url: str | None = None, client: httpx.Client | None = None,
                 timeout: float = 30.0):
        if client is None:
            base_url = base_url or os.environ.get(PIPELINE_URL_ENV)
            if not base_url:
                raise PipelineError(f"no pipeline URL given and ${PIPELINE_URL_ENV} is unset")
            client = httpx.Client(base_url=base_url, timeout=timeout)
        self.client = client

    def _post(self, path: str, body: dict) -> dict:
        resp = self.client.post(path, json=body)
        resp.raise_for_status()
        return resp.json()

    def generate_query(self, state: TraceState, seed: int) -> str:
        return str(self._post("/query", {"state": state_to_dict(state), "seed": seed})["query"])

    def retrieve(self, query: str, k: int, seed: int) -> list[Document]:
        data = self._post("/retrieve", {"query": query, "k": k, "seed": seed})
        return [document_from_dict(d) for d in data["documents"]]

    def generate_intermediate_answer(self, query: str, documents: Sequence[Document], seed: int) -> str:
        body = {"kind": "intermediate", "query": query,
                "documents": [document_to_dict(d) for d in documents], "seed": seed}
        return str(self._post("/answer", body)["answer"])

    def sample_answer(self, state: TraceState, trial_index: int, seed: int) -> str:
        body = {"kind": "final", "state": state_to_dict(state), "trial_index": trial_index, "seed": seed}
        return str(self._post("/answer", body)["answer"])

    def close(self) -> None:
        self.client.close()
