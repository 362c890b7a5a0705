import numpy as np

from stoprag.mdp import Document, EvidenceStep, RewardTable, Trajectory


def make_steps(T, prefix="s"):
    return tuple(
        EvidenceStep(f"{prefix} query {t}", (Document(f"{prefix}-d{t}", f"content {prefix} {t}", 1.0),),
                     f"{prefix} answer {t}")
        for t in range(1, T + 1)
    )


def make_traj(stop, final, tid="traj", question="q?", gold="gold"):
    """``stop`` lists r(s_t, STOP) for t = 1..T-1."""
    T = len(stop) + 1
    rewards = RewardTable({t: float(r) for t, r in enumerate(stop, 1)}, float(final))
    return Trajectory(tid, 0, question, gold, make_steps(T, tid), rewards)


def random_traj(rng, T, tid="rand", zero_prob=0.0):
    def draw():
        return 0.0 if rng.random() < zero_prob else float(rng.random())

    return make_traj([draw() for _ in range(T - 1)], draw(), tid=tid)


def table_frozen(values):
    """Frozen evaluator reading (q_stop, q_cont) by prefix length."""
    def frozen(state):
        return values[state.t]
    return frozen


def fixture_traj():
    # T=3; r(s1,STOP)=0.2, r(s2,STOP)=0.6, r(s2,CONT)=0.5; frozen(s2)=(0.55, 0.45)
    return make_traj([0.2, 0.6], 0.5, tid="fixture")


FIXTURE_FROZEN = table_frozen({1: (0.3, 0.4), 2: (0.55, 0.45)})


def random_frozen(rng, T, low=-0.5, high=1.5):
    return table_frozen({t: (float(rng.uniform(low, high)), float(rng.uniform(low, high)))
                         for t in range(0, T + 1)})


def numeric_gradient(loss_fn, params, h=1e-5):
    """Central differences of ``loss_fn(params)`` for every parameter entry."""
    grads = params.map(np.zeros_like)
    for (head, name, arr), (_, _, g) in zip(params.items(), grads.items()):
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn(params)
            flat[i] = orig - h
            down = loss_fn(params)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
    return grads


def relative_error(a, b):
    a, b = a.flat(), b.flat()
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)
