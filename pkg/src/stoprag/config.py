"""Experiment configuration: one JSON file, validated, with ``--set`` overrides."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError, InvalidInputError
from .synth import SynthSpec
from .trainer import DEFAULT_GRID, Objective, TrainConfig


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class EnvSection(_Section):
    hop_probs: dict[int, float] = Field(default_factory=lambda: {1: 0.25, 2: 0.25, 3: 0.25, 4: 0.25})
    beta: float = 0.3
    rho: float = 0.25
    sigma: float = 0.0
    seed: Optional[int] = None


class RemoteSection(_Section):
    base_url: Optional[str] = None
    timeout: float = 30.0


class RolloutSection(_Section):
    horizon: int = Field(5, ge=1)
    n_trials: int = Field(8, ge=1)
    score: str = "F1"
    retrieve_k: int = Field(10, ge=1)
    select_k: int = Field(1, ge=1)
    retries: int = Field(2, ge=0)
    workers: int = Field(1, ge=1)


class DataSection(_Section):
    dir: str = "run"
    splits: dict[str, int] = Field(default_factory=lambda: {"train": 2000, "val": 500, "test": 500})
    question_files: dict[str, str] = Field(default_factory=dict)


class EncoderSection(_Section):
    kind: str = "hashed"
    dim: int = Field(512, ge=2)


class TrainSection(_Section):
    epochs: int = Field(3, ge=1)
    batch_size: int = Field(128, ge=1)
    peak_lr: float = Field(1e-3, gt=0)
    warmup_ratio: float = Field(0.1, ge=0, le=1)
    weight_decay: float = Field(0.01, ge=0)
    lambda_start: float = Field(1.0, ge=0, le=1)
    lambda_end: float = Field(0.1, ge=0, le=1)
    lambda_fixed: Optional[float] = Field(None, ge=0, le=1)
    hidden_dim: int = Field(256, ge=1)
    objective: Objective = Objective.QLAMBDA


class PolicySection(_Section):
    grid: list[float] = Field(default_factory=lambda: list(DEFAULT_GRID))
    threshold: Optional[float] = None


class EvalSection(_Section):
    split: str = "test"


class AblationSection(_Section):
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    sigma: float = Field(0.3, ge=0)
    sizes: list[int] = Field(default_factory=lambda: [600, 200, 200])


class ExperimentConfig(_Section):
    seed: int = 0
    env: Optional[EnvSection] = None
    pipeline_remote: Optional[RemoteSection] = None
    rollout: RolloutSection = Field(default_factory=RolloutSection)
    data: DataSection = Field(default_factory=DataSection)
    encoder: EncoderSection = Field(default_factory=EncoderSection)
    train: TrainSection = Field(default_factory=TrainSection)
    policy: PolicySection = Field(default_factory=PolicySection)
    eval: EvalSection = Field(default_factory=EvalSection)
    ablation: AblationSection = Field(default_factory=AblationSection)

    @model_validator(mode="after")
    def _one_pipeline(self):
        if self.env is not None and self.pipeline_remote is not None:
            raise ValueError("configure either env (synthetic) or pipeline_remote, not both")
        if self.env is None and self.pipeline_remote is None:
            self.env = EnvSection()
        return self

    def synth_spec(self) -> SynthSpec:
        if self.env is None:
            raise ConfigError("this command needs a synthetic env section")
        env = self.env
        try:
            return SynthSpec(horizon=self.rollout.horizon, hop_probs=dict(env.hop_probs),
                             beta=env.beta, rho=env.rho, sigma=env.sigma,
                             seed=self.seed if env.seed is None else env.seed)
        except InvalidInputError as exc:
            raise ConfigError(f"env: {exc}") from None

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.train.model_dump(), seed=self.seed, threshold_grid=tuple(self.policy.grid))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.model_dump(mode="json"), sort_keys=True).encode()).hexdigest()


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        node = raw
        parts = key.strip().split(".")
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = node[part] = {}
            if not isinstance(child, dict):
                raise ConfigError(f"--set {key}: {part!r} is not a section")
            node = child
        node[parts[-1]] = _parse_value(value)
    return raw


def load_config(path: str | Path | None, overrides: list[str] = (), seed: int | None = None) -> ExperimentConfig:
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
    raw = apply_overrides(raw, list(overrides))
    if seed is not None:
        raw["seed"] = seed
    try:
        cfg = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.env is not None:
        cfg.synth_spec()
    return cfg
