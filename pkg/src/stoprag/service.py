"""HTTP service exposing a pipeline (``/query``, ``/retrieve``, ``/answer``) and,
optionally, the stopping policy (``/decide``).

:class:`stoprag.pipeline.RemotePipeline` is the matching client.
"""
from __future__ import annotations

from typing import Literal, Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .encoders import Encoder
from .mdp import Document, state_from_dict
from .pipeline import Pipeline
from .policy import decide_from_q
from .qfunction import QNetworkParams, forward


class DocumentModel(BaseModel):
    doc_id: str
    content: str
    score: float = 0.0


class StepModel(BaseModel):
    query: str
    documents: list[DocumentModel]
    intermediate_answer: str = ""


class StateModel(BaseModel):
    question: str
    gold_answer: Optional[str] = None
    steps: list[StepModel] = Field(default_factory=list)


class QueryRequest(BaseModel):
    state: StateModel
    seed: int = 0


class QueryResponse(BaseModel):
    query: str


class RetrieveRequest(BaseModel):
    query: str
    k: int = Field(10, ge=1)
    seed: int = 0


class RetrieveResponse(BaseModel):
    documents: list[DocumentModel]


class AnswerRequest(BaseModel):
    kind: Literal["intermediate", "final"]
    seed: int = 0
    query: Optional[str] = None
    documents: list[DocumentModel] = Field(default_factory=list)
    state: Optional[StateModel] = None
    trial_index: int = 0


class AnswerResponse(BaseModel):
    answer: str


class DecideRequest(BaseModel):
    state: StateModel


class DecideResponse(BaseModel):
    q_stop: float
    q_cont: float
    margin: float
    action: Literal["STOP", "CONT"]


class PolicyBundle:
    def __init__(self, params: QNetworkParams, encoder: Encoder, threshold: float):
        self.params = params
        self.encoder = encoder
        self.threshold = threshold


def _docs(models: list[DocumentModel]) -> list[Document]:
    return [Document(d.doc_id, d.content, d.score) for d in models]


def create_app(pipeline: Pipeline, policy: PolicyBundle | None = None) -> FastAPI:
    app = FastAPI(title="stoprag pipeline service")

    @app.post("/query", response_model=QueryResponse)
    def query(req: QueryRequest):
        return {"query": pipeline.generate_query(state_from_dict(req.state.model_dump()), req.seed)}

    @app.post("/retrieve", response_model=RetrieveResponse)
    def retrieve(req: RetrieveRequest):
        docs = pipeline.retrieve(req.query, req.k, req.seed)
        return {"documents": [vars(d) for d in docs]}

    @app.post("/answer", response_model=AnswerResponse)
    def answer(req: AnswerRequest):
        if req.kind == "intermediate":
            if req.query is None:
                raise HTTPException(422, "intermediate answers need a query")
            text = pipeline.generate_intermediate_answer(req.query, _docs(req.documents), req.seed)
        else:
            if req.state is None:
                raise HTTPException(422, "final answers need a state")
            text = pipeline.sample_answer(state_from_dict(req.state.model_dump()), req.trial_index, req.seed)
        return {"answer": text}

    @app.post("/decide", response_model=DecideResponse)
    def decide(req: DecideRequest):
        if policy is None:
            raise HTTPException(404, "no policy loaded")
        state = state_from_dict(req.state.model_dump())
        if state.t < 1:
            raise HTTPException(422, "decisions start after the first iteration")
        q_stop, q_cont = (float(v) for v in forward(policy.params, policy.encoder.encode(state)))
        action = decide_from_q(q_stop, q_cont, policy.threshold)
        return {"q_stop": q_stop, "q_cont": q_cont, "margin": q_stop - q_cont, "action": action.value}

    return app
