"""Experiment driver.

    stoprag synth-gen | rollout | build | train | tune | eval | replay | ablate | serve
        --config run.json [--set train.epochs=5] [--seed 1] [--workers 4]

Artifacts land in ``data.dir``; each gets a ``<name>.manifest.json`` next to it.
Exit codes: 0 ok, 2 config error, 3 pipeline/IO error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .dataset import (
    OfflineDataset,
    derive_seed,
    filter_dataset,
    read_dataset,
    read_trajectories,
    rollout,
    write_dataset,
    write_trajectories,
)
from .encoders import encoder_from_spec
from .errors import ConfigError, InvalidInputError, NumericError, PipelineError
from .experiments import SPLIT_CODES, ablation, make_encoder
from .jsonl import append_jsonl, read_jsonl, write_jsonl
from .mdp import EpisodeConfig, Trajectory
from .pipeline import RemotePipeline
from .policy import PolicyConfig, episode_retrieved_ids, replay_episode, run_episode
from .qfunction import load_checkpoint, save_checkpoint
from .scoring import accuracy_contains, exact_match, f1_score, get_score_function, retrieval_metrics
from .synth import best_fixed_stop, clairvoyant_best, generate_questions, synth_pipeline
from .trainer import FeatureCache, replay_policy_value, train, tune_threshold

log = logging.getLogger("stoprag")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


# -- helpers ----------------------------------------------------------------

def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(artifact: Path, command: str, cfg: ExperimentConfig, inputs: Iterable[Path] = ()) -> None:
    manifest = {
        "artifact": artifact.name,
        "command": command,
        "config_sha256": cfg.digest(),
        "seed": cfg.seed,
        "inputs": {str(p): _sha256(p) for p in inputs if p.exists()},
        "version": __version__,
    }
    artifact.with_name(artifact.name + ".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))


def _write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True))


class Paths:
    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.root = Path(cfg.data.dir)

    def questions(self, split: str) -> Path:
        custom = self.cfg.data.question_files.get(split)
        return Path(custom) if custom else self.root / f"questions.{split}.jsonl"

    def trajectories(self, split: str) -> Path:
        return self.root / f"trajectories.{split}.jsonl"

    def failures(self, split: str) -> Path:
        return self.root / f"rollout_failures.{split}.jsonl"

    def dataset(self, split: str) -> Path:
        return self.root / f"dataset.{split}.jsonl"

    @property
    def checkpoints(self) -> Path:
        return self.root / "checkpoints"

    @property
    def best(self) -> Path:
        return self.checkpoints / "best.json"

    @property
    def threshold(self) -> Path:
        return self.root / "threshold.json"


def _pipeline(cfg: ExperimentConfig):
    if cfg.env is not None:
        return synth_pipeline(cfg.synth_spec())
    remote = cfg.pipeline_remote
    return RemotePipeline(remote.base_url, timeout=remote.timeout)


def _split_code(split: str) -> int:
    return SPLIT_CODES.get(split, 3 + sum(map(ord, split)))


def _require(path: Path) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing input {path}")
    return path


def _load_policy(paths: Paths):
    params, enc_spec, meta = load_checkpoint(_require(paths.best))
    return params, encoder_from_spec(enc_spec), meta


def _threshold(cfg: ExperimentConfig, paths: Paths) -> float:
    if cfg.policy.threshold is not None:
        return cfg.policy.threshold
    return float(json.loads(_require(paths.threshold).read_text())["threshold"])


# -- commands ---------------------------------------------------------------

def cmd_synth_gen(cfg: ExperimentConfig, args) -> int:
    spec = cfg.synth_spec()
    paths = Paths(cfg)
    for split, n in cfg.data.splits.items():
        out = paths.questions(split)
        count = write_jsonl(out, generate_questions(spec, n, split))
        write_manifest(out, "synth-gen", cfg)
        print(f"{split}: wrote {count} questions to {out}")
    return EXIT_OK


def cmd_rollout(cfg: ExperimentConfig, args) -> int:
    paths = Paths(cfg)
    pipeline = _pipeline(cfg)
    ro = cfg.rollout
    config = EpisodeConfig(ro.horizon)
    score = get_score_function(ro.score)
    workers = args.workers or ro.workers
    failed_total = 0
    for split in _splits(cfg, args):
        qpath = _require(paths.questions(split))
        questions = list(read_jsonl(qpath))
        out = paths.trajectories(split)
        done: dict[str, Trajectory] = {}
        if out.exists():
            done = {tr.trajectory_id: tr for tr in read_trajectories(out)}
        code = _split_code(split)

        def run(item):
            i, rec = item
            tid = str(rec.get("id", f"{split}-{i:06d}"))
            if tid in done:
                return tid, done[tid], None
            try:
                traj = rollout(pipeline, rec["question"], rec["answer"], config,
                               derive_seed(cfg.seed, code, i), n_trials=ro.n_trials, score=score,
                               score_name=ro.score.upper(), retrieve_k=ro.retrieve_k,
                               select_k=ro.select_k, trajectory_id=tid,
                               gold_doc_ids=rec.get("gold_doc_ids") or (), retries=ro.retries)
                return tid, traj, None
            except PipelineError as exc:
                return tid, None, str(exc)

        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, enumerate(questions)))
        trajs = [tr for _, tr, _ in results if tr is not None]
        failures = [{"trajectory_id": tid, "error": err} for tid, _, err in results if err]
        write_trajectories(out, trajs)
        write_manifest(out, "rollout", cfg, [qpath])
        skipped = sum(tid in done for tid, _, _ in results)
        print(f"{split}: {len(trajs)} trajectories ({skipped} already present), {len(failures)} failed -> {out}")
        if failures:
            append_jsonl(paths.failures(split), failures)
            failed_total += len(failures)
    return EXIT_IO if failed_total else EXIT_OK


def _splits(cfg: ExperimentConfig, args) -> list[str]:
    return list(args.splits) if getattr(args, "splits", None) else list(cfg.data.splits)


def cmd_build(cfg: ExperimentConfig, args) -> int:
    paths = Paths(cfg)
    for split in _splits(cfg, args):
        src = paths.trajectories(split)
        if not src.exists():
            log.warning("no trajectories for split %s, skipping", split)
            continue
        full = OfflineDataset.from_trajectories(read_trajectories(src))
        kept = filter_dataset(full)
        out = paths.dataset(split)
        write_dataset(out, kept)
        write_manifest(out, "build", cfg, [src])
        print(f"{split}: {len(full)} datapoints from {len(full.trajectories)} trajectories, "
              f"kept {len(kept)}, dropped {len(full) - len(kept)} -> {out}")
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig, args) -> int:
    paths = Paths(cfg)
    train_path, val_path = _require(paths.dataset("train")), _require(paths.dataset("val"))
    ds, val = read_dataset(train_path), read_dataset(val_path)
    encoder = make_encoder(cfg.encoder.kind, cfg.rollout.horizon, cfg.encoder.dim,
                           cfg.synth_spec().max_hops if cfg.env else None)
    tcfg = cfg.train_config()
    params, report = train(ds, val, tcfg, encoder)
    paths.checkpoints.mkdir(parents=True, exist_ok=True)
    meta_base = {"objective": tcfg.objective.value, "seed": cfg.seed, "config_sha256": cfg.digest()}
    for rec in report.epochs:
        ck = paths.checkpoints / f"{rec.checkpoint_id}.json"
        save_checkpoint(ck, report.checkpoints[rec.checkpoint_id], encoder.spec(),
                        {**meta_base, "epoch": rec.epoch, "val_value": rec.val_value, "threshold": rec.threshold})
        write_manifest(ck, "train", cfg, [train_path, val_path])
    best = report.checkpoints[report.selected_checkpoint]
    save_checkpoint(paths.best, best, encoder.spec(),
                    {**meta_base, "selected": report.selected_checkpoint,
                     "threshold": report.selected_threshold})
    write_manifest(paths.best, "train", cfg, [train_path, val_path])
    csv_path = paths.root / "train_report.csv"
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "loss", "lambda", "lr"])
        for s in report.steps:
            w.writerow([s.step, repr(s.loss), repr(s.lam), repr(s.lr)])
    write_manifest(csv_path, "train", cfg, [train_path, val_path])
    summary = paths.root / "train_summary.json"
    _write_json(summary, report.summary())
    write_manifest(summary, "train", cfg, [train_path, val_path])
    print(f"trained {len(report.steps)} steps; selected {report.selected_checkpoint} "
          f"(val replay {report.epochs[-1].val_value if report.epochs else float('nan'):.4f} last epoch)")
    return EXIT_OK


def cmd_tune(cfg: ExperimentConfig, args) -> int:
    paths = Paths(cfg)
    params, encoder, _ = _load_policy(paths)
    val_path = _require(paths.dataset("val"))
    val = read_dataset(val_path)
    tau, value = tune_threshold(params, encoder, val, cfg.policy.grid)
    _write_json(paths.threshold, {"threshold": tau, "value": value, "grid_size": len(cfg.policy.grid)})
    write_manifest(paths.threshold, "tune", cfg, [paths.best, val_path])
    print(f"threshold {tau:+.3f} (validation replay value {value:.4f})")
    return EXIT_OK


def cmd_eval(cfg: ExperimentConfig, args) -> int:
    paths = Paths(cfg)
    split = cfg.eval.split
    params, encoder, _ = _load_policy(paths)
    tau = _threshold(cfg, paths)
    pipeline = _pipeline(cfg)
    qpath = _require(paths.questions(split))
    questions = list(read_jsonl(qpath))
    pcfg = PolicyConfig(tau, cfg.rollout.horizon, encoder.spec(), str(paths.best))
    code = _split_code(split)
    ro = cfg.rollout

    def run(item):
        i, rec = item
        return run_episode(pipeline, params, encoder, pcfg, rec["question"],
                           derive_seed(cfg.seed, code, i), gold_answer=rec.get("answer"),
                           retrieve_k=ro.retrieve_k, select_k=ro.select_k, retries=ro.retries)

    with ThreadPoolExecutor(max_workers=args.workers or ro.workers) as pool:
        results = list(pool.map(run, enumerate(questions)))
    episodes = paths.root / f"episodes.{split}.jsonl"
    write_jsonl(episodes, (r.to_dict() for r in results))
    write_manifest(episodes, "eval", cfg, [qpath, paths.best])
    summary = evaluation_summary(results, questions)
    summary["threshold"] = tau
    out = paths.root / "eval_summary.json"
    _write_json(out, summary)
    write_manifest(out, "eval", cfg, [qpath, paths.best])
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def evaluation_summary(results, questions) -> dict:
    em = [exact_match(r.final_answer, q["answer"]) for r, q in zip(results, questions)]
    f1 = [f1_score(r.final_answer, q["answer"]) for r, q in zip(results, questions)]
    acc = [accuracy_contains(r.final_answer, q["answer"]) for r, q in zip(results, questions)]
    prec, rec = [], []
    for r, q in zip(results, questions):
        if q.get("gold_doc_ids"):
            p, c = retrieval_metrics(episode_retrieved_ids(r), q["gold_doc_ids"])
            prec.append(p)
            rec.append(c)
    mean = lambda xs: float(np.mean(xs)) if xs else None  # noqa: E731
    return {"n": len(results), "em": mean(em), "f1": mean(f1), "acc": mean(acc),
            "precision": mean(prec), "recall": mean(rec),
            "mean_steps": mean([r.stop_t for r in results])}


def cmd_replay(cfg: ExperimentConfig, args) -> int:
    paths = Paths(cfg)
    split = cfg.eval.split
    params, encoder, _ = _load_policy(paths)
    tau = _threshold(cfg, paths)
    src = _require(paths.dataset(split))
    ds = read_dataset(src)
    trajs = list(ds.trajectories.values())
    features = FeatureCache(encoder, trajs)
    outcomes = [replay_episode(tr, params, encoder, tau) for tr in trajs]
    t_star, fixed = best_fixed_stop(trajs)
    result = {
        "split": split,
        "threshold": tau,
        "n": len(trajs),
        "mean_reward": replay_policy_value(params, encoder, trajs, tau, features),
        "mean_stop_t": float(np.mean([t for t, _ in outcomes])),
        "fixed_horizon_reward": float(np.mean([tr.rewards.final_cont for tr in trajs])),
        "best_fixed_stop": {"t": t_star, "mean_reward": fixed},
        "clairvoyant": float(np.mean([clairvoyant_best(tr) for tr in trajs])),
    }
    out = paths.root / f"replay.{split}.json"
    _write_json(out, result)
    write_manifest(out, "replay", cfg, [src, paths.best])
    print(json.dumps(result, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_ablate(cfg: ExperimentConfig, args) -> int:
    from dataclasses import replace

    spec = replace(cfg.synth_spec(), sigma=cfg.ablation.sigma)
    result = ablation(spec, cfg.train_config(), cfg.ablation.seeds,
                      sizes=tuple(cfg.ablation.sizes), encoder_kind=cfg.encoder.kind, dim=cfg.encoder.dim)
    out = Path(cfg.data.dir) / "ablation.json"
    _write_json(out, result)
    write_manifest(out, "ablate", cfg)
    for name, row in result["objectives"].items():
        print(f"{name:8s} mean reward {row['mean']:.4f} ± {row['std']:.4f}")
    print(f"clairvoyant {result['clairvoyant']:.4f}  best fixed stop {result['best_fixed']:.4f}")
    return EXIT_OK


def cmd_serve(cfg: ExperimentConfig, args) -> int:
    import uvicorn

    from .service import PolicyBundle, create_app

    paths = Paths(cfg)
    policy = None
    if paths.best.exists():
        params, encoder, _ = _load_policy(paths)
        policy = PolicyBundle(params, encoder, _threshold(cfg, paths) if paths.threshold.exists()
                              or cfg.policy.threshold is not None else 0.0)
    uvicorn.run(create_app(_pipeline(cfg), policy), host=args.host, port=args.port)
    return EXIT_OK


COMMANDS = {
    "synth-gen": cmd_synth_gen,
    "rollout": cmd_rollout,
    "build": cmd_build,
    "train": cmd_train,
    "tune": cmd_tune,
    "eval": cmd_eval,
    "replay": cmd_replay,
    "ablate": cmd_ablate,
    "serve": cmd_serve,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stoprag", description="Adaptive stopping for iterative RAG")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config (JSON)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, dotted keys (repeatable)")
        p.add_argument("--seed", type=int, help="override the root seed")
        p.add_argument("--workers", type=int, help="parallel episodes (rollout/eval)")
        p.add_argument("--splits", nargs="+", help="restrict to these splits (rollout/build)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "serve":
            p.add_argument("--host", default="127.0.0.1")
            p.add_argument("--port", type=int, default=8000)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set, args.seed)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (PipelineError, InvalidInputError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
