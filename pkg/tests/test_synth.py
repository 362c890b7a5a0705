import math

import numpy as np
import pytest

from stoprag.dataset import OfflineDataset, filter_dataset
from stoprag.errors import InvalidInputError
from stoprag.experiments import synth_trajectories
from stoprag.mdp import Action, EpisodeConfig, make_prefix
from stoprag.scoring import estimate_reward
from stoprag.synth import (
    SynthSpec,
    TabularSpec,
    backward_induction,
    best_fixed_stop,
    clairvoyant_best,
    episode_hops,
    generate_questions,
    reward_curve,
    synth_pipeline,
    tabular_trajectory,
)
from stoprag.dataset import rollout
from stoprag.targets import mc_target

from helpers import fixture_traj, make_traj


def test_reward_curve_example():
    beta = 0.3
    got = [reward_curve(3, t, beta, 0.0) for t in range(1, 5)]
    assert got == pytest.approx([beta / 3, 2 * beta / 3, 1.0, 1.0], abs=1e-15)
    assert reward_curve(2, 5, beta, 0.25) == 0.25
    assert reward_curve(1, 9, beta, 0.25) == 0.0


@pytest.mark.parametrize("kw", [
    {"beta": 1.0}, {"rho": 1.5}, {"sigma": -0.1}, {"hop_probs": {1: 0.5, 2: 0.4}},
    {"hop_probs": {0: 1.0}}, {"hop_probs": {}},
])
def test_spec_validation(kw):
    with pytest.raises(InvalidInputError):
        SynthSpec(**kw)


def test_noiseless_rewards_follow_curve_exactly_when_deterministic():
    # β=0, ρ=0: answers are right with probability 0 or 1
    spec = SynthSpec(horizon=5, beta=0.0, rho=0.0)
    for q in generate_questions(spec, 10):
        traj = rollout(synth_pipeline(spec), q["question"], q["answer"], EpisodeConfig(5), 3)
        h = episode_hops(spec, q["question"])
        assert [traj.rewards.stop[t] for t in range(1, 5)] == [float(t >= h) for t in range(1, 5)]
        assert traj.rewards.final_cont == 1.0


def test_beta_zero_filter_drops_unreachable_hops():
    spec = SynthSpec(horizon=5, beta=0.0, hop_probs={6: 0.5, 2: 0.5})
    trajs = synth_trajectories(spec, 40, "train")
    kept = filter_dataset(OfflineDataset.from_trajectories(trajs)).steps_by_trajectory()
    for tr in trajs:
        h = episode_hops(spec, tr.question)
        if h > 4 and tr.rewards.final_cont == 0.0:
            assert kept[tr.trajectory_id] == []
        else:
            assert kept[tr.trajectory_id] != []
    assert any(episode_hops(spec, tr.question) == 6 for tr in trajs)


def test_identical_seeds_identical_trajectories():
    spec = SynthSpec(horizon=4, sigma=0.3, seed=9)
    assert synth_trajectories(spec, 5, "val") == synth_trajectories(spec, 5, "val")


def test_reward_estimates_within_three_binomial_sigma():
    spec = SynthSpec(horizon=5, beta=0.5, rho=0.25)
    pipe = synth_pipeline(spec)
    n = 64
    for q in generate_questions(spec, 25):
        traj = rollout(pipe, q["question"], q["answer"], EpisodeConfig(5), 1, n_trials=1)
        h = episode_hops(spec, q["question"])
        for t in range(1, 6):
            state = make_prefix(traj, t)
            p = reward_curve(h, t, spec.beta, spec.rho)
            est = estimate_reward(state, pipe.sample_answer, n, seed=1000 + t)
            assert abs(est - p) <= 3 * math.sqrt(p * (1 - p) / n) + 1e-12


def test_indicator_corruption_rate():
    spec = SynthSpec(horizon=5, sigma=0.5, hop_probs={2: 1.0})
    pipe = synth_pipeline(spec)
    q = generate_questions(spec, 1)[0]["question"]
    wrong = sum(pipe.retrieve(f"step 1 for: {q}", 1, s)[0].content.split()[0] != "hops2"
                for s in range(2000))
    # corrupted with prob 0.5, and a corrupted draw is uniform over 2 hop values
    assert abs(wrong / 2000 - 0.25) < 0.04


def test_backward_induction_examples():
    spec = TabularSpec(3, (1,), np.array([[np.nan], [0.2], [0.6]]), np.array([0.5]))
    Q, V = backward_induction(spec)
    assert Q[1, 0, 1] == 0.6 and Q[2, 0, 1] == 0.5 and V[1, 0] == 0.6
    zero = TabularSpec(4, (1, 2), np.zeros((4, 2)), np.zeros(2))
    Qz, _ = backward_induction(zero)
    assert np.all(Qz[1:] == 0)


def test_backward_induction_cont_is_chain_max():
    rng = np.random.default_rng(0)
    from stoprag.synth import random_tabular

    for _ in range(20):
        spec = random_tabular(rng, int(rng.integers(2, 8)))
        Q, _ = backward_induction(spec)
        for i in range(len(spec.hops)):
            traj = tabular_trajectory(spec, i)
            for t in range(1, spec.horizon):
                assert Q[t, i, 1] == mc_target(traj, t, Action.CONT)


def test_clairvoyant_best():
    assert clairvoyant_best(fixture_traj()) == 0.6
    assert clairvoyant_best(make_traj([0.4] * 5, 0.4)) == 0.4
    traj = make_traj([0.2, 0.9, 0.1], 0.3)
    assert clairvoyant_best(traj) == max(traj.rewards.stop[1], mc_target(traj, 1, Action.CONT))


def test_best_fixed_stop_peaks_at_hop_count():
    for h in (1, 2, 3, 4, 5):
        spec = SynthSpec(horizon=5, hop_probs={h: 1.0}, beta=0.3, rho=0.25)
        t_star, _ = best_fixed_stop(synth_trajectories(spec, 30, "test"))
        assert t_star == h


def test_best_fixed_stop_edges():
    t_star, value = best_fixed_stop([make_traj([], 0.7)])
    assert (t_star, value) == (1, 0.7)
    # ties go to the smallest t
    assert best_fixed_stop([make_traj([0.5, 0.5], 0.5)]) == (1, 0.5)
    with pytest.raises(InvalidInputError):
        best_fixed_stop([])
    with pytest.raises(InvalidInputError):
        best_fixed_stop([make_traj([0.1], 0.1, tid="a"), make_traj([0.1, 0.2], 0.1, tid="b")])
