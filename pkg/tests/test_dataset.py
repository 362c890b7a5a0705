import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stoprag.dataset import (
    OfflineDataset,
    decompose,
    derive_seed,
    filter_dataset,
    is_uninformative,
    read_dataset,
    read_trajectories,
    rollout,
    write_dataset,
    write_trajectories,
)
from stoprag.errors import InvalidInputError, PipelineError
from stoprag.mdp import EpisodeConfig, RewardTable, Trajectory, make_prefix, trajectory_to_dict
from stoprag.synth import SynthSpec, generate_questions, synth_pipeline

from helpers import make_steps, make_traj, random_traj


def brute_force_kept(traj):
    """Datapoint steps that survive: some reward reachable from s_t onwards is non-zero."""
    T = traj.horizon
    kept = []
    for t in range(1, T):
        reachable = [traj.rewards.stop[k] for k in range(t, T)] + [traj.rewards.final_cont]
        if any(r != 0.0 for r in reachable):
            kept.append(t)
    return kept


def test_decompose_counts_and_consistency():
    traj = make_traj([0.1] * 9, 0.2)
    dps = decompose(traj)
    assert len(dps) == 9
    assert dps[2].t == 3 and dps[2].state == make_prefix(traj, 3)
    assert [dp.is_last_decision for dp in dps] == [False] * 8 + [True]
    assert all(dp.r_stop == traj.rewards.stop[dp.t] for dp in dps)
    (only,) = decompose(make_traj([0.4], 0.1))
    assert only.t == 1 and only.is_last_decision


def test_decompose_rejects_incomplete_rewards():
    traj = make_traj([0.1, 0.2], 0.3)
    broken = Trajectory.__new__(Trajectory)
    object.__setattr__(broken, "__dict__", dict(vars(traj), rewards=RewardTable({1: 0.1}, 0.3)))
    with pytest.raises(InvalidInputError):
        decompose(broken)


def test_filter_examples():
    zero = make_traj([0.0] * 4, 0.0, tid="zero")
    later = make_traj([0.0, 0.0, 0.3, 0.0], 0.0, tid="later")
    now = make_traj([0.2, 0.0, 0.0, 0.0], 0.0, tid="now")
    ds = filter_dataset(OfflineDataset.from_trajectories([zero, later, now]))
    kept = ds.steps_by_trajectory()
    assert kept == {"zero": [], "later": [1, 2, 3], "now": [1]}


def test_duplicate_ids_rejected():
    with pytest.raises(InvalidInputError):
        OfflineDataset.from_trajectories([make_traj([0.1], 0.1), make_traj([0.2], 0.2)])


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(1, 10), min_size=1, max_size=8))
def test_count_and_filter_match_brute_force(seed, horizons):
    rng = np.random.default_rng(seed)
    trajs = [random_traj(rng, T, tid=f"r{i}", zero_prob=0.7) for i, T in enumerate(horizons)]
    ds = OfflineDataset.from_trajectories(trajs)
    assert len(ds) == sum(T - 1 for T in horizons)
    kept = filter_dataset(ds).steps_by_trajectory()
    for tr in trajs:
        assert kept[tr.trajectory_id] == brute_force_kept(tr)
        for t in range(1, tr.horizon):
            assert is_uninformative(tr, t) == (t not in kept[tr.trajectory_id])


def _synth_rollout(seed, T=5, **kw):
    spec = SynthSpec(horizon=T)
    q = generate_questions(spec, 1)[0]
    return rollout(synth_pipeline(spec), q["question"], q["answer"], EpisodeConfig(T), seed,
                   trajectory_id=q["id"], **kw)


def test_rollout_structure_and_determinism():
    a, b = _synth_rollout(11), _synth_rollout(11)
    assert a.horizon == 5 and set(a.rewards.stop) == {1, 2, 3, 4}
    assert trajectory_to_dict(a) == trajectory_to_dict(b)
    assert a.meta == {"n_trials": 8, "score": "F1"}
    assert all(len(s.documents) == 1 for s in a.steps)


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(1, 2, 3) == derive_seed(1, 2, 3)
    assert len({derive_seed(0, t, k) for t in range(10) for k in range(5)}) == 50


class Flaky:
    """Fails the first ``n`` retrieve calls."""

    def __init__(self, inner, n):
        self.inner, self.n = inner, n

    def __getattr__(self, name):
        return getattr(self.inner, name)

    def retrieve(self, query, k, seed):
        if self.n > 0:
            self.n -= 1
            raise ConnectionError("boom")
        return self.inner.retrieve(query, k, seed)


def test_rollout_retries_then_fails_with_partial():
    spec = SynthSpec(horizon=3)
    q = generate_questions(spec, 1)[0]
    cfg = EpisodeConfig(3)
    ok = rollout(Flaky(synth_pipeline(spec), 2), q["question"], q["answer"], cfg, 5, retries=2)
    assert ok == rollout(synth_pipeline(spec), q["question"], q["answer"], cfg, 5)
    with pytest.raises(PipelineError) as info:
        rollout(Flaky(synth_pipeline(spec), 3), q["question"], q["answer"], cfg, 5, retries=2)
    assert info.value.partial is not None and info.value.partial.t == 0


def test_file_roundtrips(tmp_path):
    rng = np.random.default_rng(0)
    trajs = [random_traj(rng, 4, tid=f"x{i}", zero_prob=0.5) for i in range(20)]
    write_trajectories(tmp_path / "t.jsonl", trajs)
    assert read_trajectories(tmp_path / "t.jsonl") == trajs
    ds = filter_dataset(OfflineDataset.from_trajectories(trajs))
    write_dataset(tmp_path / "d.jsonl", ds)
    back = read_dataset(tmp_path / "d.jsonl")
    assert back.datapoints == ds.datapoints and back.trajectories == ds.trajectories


def test_make_steps_helper_sanity():
    assert len(make_steps(3)) == 3
