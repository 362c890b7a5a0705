import json

import pytest

from stoprag.cli import main
from stoprag.config import load_config
from stoprag.dataset import OfflineDataset, read_dataset, read_trajectories
from stoprag.errors import ConfigError
from stoprag.jsonl import read_jsonl
from stoprag.trainer import replay_policy_value
from stoprag.qfunction import load_checkpoint
from stoprag.encoders import encoder_from_spec


def _cfg(tmp_path, **extra):
    cfg = {"seed": 3, "data": {"dir": str(tmp_path / "run"), "splits": {"train": 60, "val": 20, "test": 20}},
           "train": {"epochs": 2, "hidden_dim": 16, "batch_size": 32}, "encoder": {"dim": 64},
           "policy": {"grid": [-0.5, -0.25, 0.0, 0.25, 0.5]}}
    cfg.update(extra)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def test_full_pipeline(tmp_path, capsys):
    cfg = _cfg(tmp_path)
    run = tmp_path / "run"
    for verb in ("synth-gen", "rollout", "build", "train", "tune", "eval", "replay"):
        assert main([verb, "--config", cfg]) == 0, verb
    assert len(list(read_jsonl(run / "questions.train.jsonl"))) == 60
    trajs = read_trajectories(run / "trajectories.train.jsonl")
    assert len(trajs) == 60 and all(t.horizon == 5 and t.meta["n_trials"] == 8 for t in trajs)
    full = OfflineDataset.from_trajectories(trajs)
    assert len(full) == 60 * 4
    summary = json.loads((run / "eval_summary.json").read_text())
    assert set(summary) >= {"em", "f1", "acc", "precision", "recall", "mean_steps", "n"}
    tau = json.loads((run / "threshold.json").read_text())["threshold"]
    assert tau in [-0.5, -0.25, 0.0, 0.25, 0.5]
    replay = json.loads((run / "replay.test.json").read_text())
    params, spec, _ = load_checkpoint(run / "checkpoints" / "best.json")
    ds = read_dataset(run / "dataset.test.jsonl")
    assert replay["mean_reward"] == replay_policy_value(params, encoder_from_spec(spec), ds, tau)
    for name in ("trajectories.train.jsonl", "checkpoints/best.json", "eval_summary.json"):
        manifest = json.loads((run / (name + ".manifest.json")).read_text())
        assert manifest["seed"] == 3 and len(manifest["config_sha256"]) == 64


def test_synth_gen_deterministic(tmp_path):
    cfg = _cfg(tmp_path)
    main(["synth-gen", "--config", cfg])
    first = (tmp_path / "run" / "questions.train.jsonl").read_bytes()
    main(["synth-gen", "--config", cfg])
    assert (tmp_path / "run" / "questions.train.jsonl").read_bytes() == first


def test_rollout_is_resumable(tmp_path, capsys):
    cfg = _cfg(tmp_path)
    main(["synth-gen", "--config", cfg])
    assert main(["rollout", "--config", cfg, "--splits", "val"]) == 0
    out = tmp_path / "run" / "trajectories.val.jsonl"
    first = out.read_bytes()
    capsys.readouterr()
    assert main(["rollout", "--config", cfg, "--splits", "val", "--workers", "3"]) == 0
    assert "20 already present" in capsys.readouterr().out
    assert out.read_bytes() == first


def test_build_drops_all_zero_trajectories(tmp_path, capsys):
    # h=6 > T and β=0: every reward is zero
    cfg = _cfg(tmp_path, env={"hop_probs": {"6": 1.0}, "beta": 0.0})
    main(["synth-gen", "--config", cfg])
    main(["rollout", "--config", cfg, "--splits", "train"])
    capsys.readouterr()
    assert main(["build", "--config", cfg, "--splits", "train"]) == 0
    assert "240 datapoints" in capsys.readouterr().out
    assert len(read_dataset(tmp_path / "run" / "dataset.train.jsonl")) == 0


@pytest.mark.parametrize("argv", [
    ["synth-gen", "--set", "env.hop_probs={\"1\": 0.5}"],
    ["synth-gen", "--set", "train.nonsense=1"],
    ["synth-gen", "--set", "env.beta=1.5"],
])
def test_config_errors_exit_2(tmp_path, argv):
    assert main(argv + ["--config", _cfg(tmp_path)]) == 2


def test_missing_config_file_exit_2(tmp_path):
    assert main(["synth-gen", "--config", str(tmp_path / "nope.json")]) == 2


def test_unreachable_remote_exit_3(tmp_path):
    cfg = _cfg(tmp_path)
    main(["synth-gen", "--config", cfg])
    code = main(["rollout", "--config", cfg, "--splits", "val",
                 "--set", "env=null", "--set", "pipeline_remote.base_url=http://127.0.0.1:9",
                 "--set", "rollout.retries=0", "--set", "pipeline_remote.timeout=1"])
    assert code == 3
    failures = list(read_jsonl(tmp_path / "run" / "rollout_failures.val.jsonl"))
    assert len(failures) == 20


def test_missing_inputs_exit_3(tmp_path):
    assert main(["train", "--config", _cfg(tmp_path)]) == 3


def test_overrides_and_seed():
    cfg = load_config(None, ["train.epochs=7", "rollout.score=EM", "data.dir=x"], seed=11)
    assert cfg.train.epochs == 7 and cfg.rollout.score == "EM" and cfg.seed == 11
    assert cfg.train_config().seed == 11
    with pytest.raises(ConfigError):
        load_config(None, ["noequals"])
    with pytest.raises(ConfigError):
        load_config(None, ["env={}", "pipeline_remote={}"])
    assert load_config(None).digest() == load_config(None).digest()
