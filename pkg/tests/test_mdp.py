import pytest
from hypothesis import given, strategies as st

from stoprag.errors import InvalidInputError, OutOfRangeError
from stoprag.mdp import (
    Action,
    Document,
    EpisodeConfig,
    RewardTable,
    TraceState,
    is_terminal,
    make_prefix,
    trajectory_from_dict,
    trajectory_to_dict,
)

from helpers import make_traj


@pytest.fixture
def traj10():
    return make_traj([0.1 * i for i in range(1, 10)], 0.5, tid="t10")


def test_action_has_exactly_two_values():
    assert {a.value for a in Action} == {"STOP", "CONT"}


def test_make_prefix(traj10):
    s = make_prefix(traj10, 3)
    assert s.t == 3 and len(s.steps) == 3
    assert s.steps == traj10.steps[:3]
    assert (s.question, s.gold_answer) == (traj10.question, traj10.gold_answer)
    empty = make_prefix(traj10, 0)
    assert empty.t == 0 and empty.steps == ()
    with pytest.raises(OutOfRangeError):
        make_prefix(traj10, 11)
    with pytest.raises(OutOfRangeError):
        make_prefix(traj10, -1)


@given(st.integers(1, 12), st.data())
def test_prefixes_nested(T, data):
    traj = make_traj([0.0] * (T - 1), 0.0)
    for t in range(T):
        a, b = make_prefix(traj, t), make_prefix(traj, t + 1)
        assert a.t == t and b.t == t + 1
        assert b.steps[:t] == a.steps


def test_is_terminal():
    cfg = EpisodeConfig(10)
    traj = make_traj([0.0] * 9, 0.0)
    assert is_terminal(make_prefix(traj, 10), cfg, stopped=False)
    assert is_terminal(make_prefix(traj, 3), cfg, stopped=True)
    assert not is_terminal(make_prefix(traj, 3), cfg, stopped=False)


def test_episode_config_rejects_discount_and_bad_horizon():
    with pytest.raises(InvalidInputError):
        EpisodeConfig(0)
    with pytest.raises(InvalidInputError):
        EpisodeConfig(5, discount=0.9)


@pytest.mark.parametrize("bad", [-0.01, 1.01, float("nan")])
def test_reward_table_rejects_values_outside_unit_interval(bad):
    with pytest.raises(InvalidInputError):
        RewardTable({1: bad}, 0.0)
    with pytest.raises(InvalidInputError):
        RewardTable({1: 0.5}, bad)


def test_trajectory_requires_complete_reward_keys():
    with pytest.raises(InvalidInputError):
        make_traj([0.1, 0.2], 0.3).__class__(
            "x", 0, "q", "g", make_traj([0.1, 0.2], 0.3).steps, RewardTable({1: 0.1}, 0.3))


def test_document_score_must_be_finite():
    with pytest.raises(InvalidInputError):
        Document("d", "c", float("inf"))


def test_trajectory_json_roundtrip(traj10):
    record = trajectory_to_dict(traj10)
    assert set(record) >= {"trajectory_id", "seed", "question", "gold_answer", "horizon", "steps", "rewards"}
    assert record["rewards"]["stop"]["1"] == traj10.rewards.stop[1]
    assert trajectory_from_dict(record) == traj10


def test_trajectory_from_dict_checks_horizon(traj10):
    record = trajectory_to_dict(traj10)
    record["horizon"] = 7
    with pytest.raises(InvalidInputError):
        trajectory_from_dict(record)


def test_trace_state_extend():
    s = TraceState("q", "a")
    s2 = s.extend(make_traj([0.0], 0.0).steps[0])
    assert s.t == 0 and s2.t == 1
