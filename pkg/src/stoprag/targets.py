"""Learning targets for the STOP/CONT MDP.

Closed forms assume no discounting. ``STOP`` targets are always the immediate
stop reward. ``CONT`` targets at decision step ``t`` mix the ``n``-step backups

    Q(n)   = max(r_stop[t+1 .. t+n-1] ∪ {max frozen(s_{t+n})})      n < T-t
    Q(T-t) = max(r_stop[t+1 .. T-1]  ∪ {r_final_cont})

geometrically with weight ``(1-λ) λ^(n-1)`` and the tail weight ``λ^(T-t-1)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .errors import InvalidInputError, OutOfRangeError
from .mdp import Action, TraceState, Trajectory, make_prefix

FrozenEvaluator = Callable[[TraceState], tuple[float, float]]


@dataclass(frozen=True)
class TargetPair:
    target_stop: float
    target_cont: float


# -- array-level core --------------------------------------------------------
# ``stop_r`` and ``boot`` are indexed by decision step t (index 0 unused);
# ``boot[j]`` is max(q_stop, q_cont) of the frozen network at s_j.

def nstep_cont(stop_r: Sequence[float], final_cont: float, boot: Optional[Sequence[float]],
               t: int, n: int, horizon: int) -> float:
    if n == horizon - t:
        return max([*stop_r[t + 1:horizon], final_cont])
    if boot is None:
        raise InvalidInputError(f"{n}-step CONT target at t={t} needs a frozen evaluator")
    return max([*stop_r[t + 1:t + n], boot[t + n]])


def q_lambda_cont(stop_r: Sequence[float], final_cont: float, boot: Optional[Sequence[float]],
                  t: int, lam: float, horizon: int) -> float:
    if t == horizon - 1:
        return final_cont
    tail = horizon - t
    # running max of stop rewards along the chain, shared by all n
    total = 0.0
    running = float("-inf")
    for n in range(1, tail):
        if n > 1:
            running = max(running, stop_r[t + n - 1])
        if boot is None:
            if lam != 1.0:
                raise InvalidInputError(f"CONT target at t={t} with λ={lam} needs a frozen evaluator")
            continue
        total += (1.0 - lam) * lam ** (n - 1) * max(running, boot[t + n])
    mc = max(running, stop_r[horizon - 1], final_cont)
    return total + lam ** (tail - 1) * mc


# -- trajectory-level operations --------------------------------------------

def _check_t(traj: Trajectory, t: int) -> None:
    if not 1 <= t <= traj.horizon - 1:
        raise OutOfRangeError(f"decision step t={t} outside [1, {traj.horizon - 1}]")


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise OutOfRangeError(f"λ must lie in [0, 1], got {lam}")


def bootstrap_values(traj: Trajectory, frozen: Optional[FrozenEvaluator],
                     first: int = 1) -> Optional[list[float]]:
    """max(q_stop, q_cont) of ``frozen`` at every decision state from ``first`` on."""
    if frozen is None:
        return None
    boot = [float("nan")] * traj.horizon
    for j in range(first, traj.horizon):
        boot[j] = max(frozen(make_prefix(traj, j)))
    return boot


def n_step_target(traj: Trajectory, t: int, a: Action, n: int,
                  frozen: Optional[FrozenEvaluator] = None) -> float:
    _check_t(traj, t)
    T = traj.horizon
    if not 1 <= n <= T - t:
        raise OutOfRangeError(f"n={n} outside [1, {T - t}]")
    if a is Action.STOP:
        return traj.rewards.stop[t]
    stop_r = traj.rewards.stop_list(T)
    boot = None
    if n < T - t:
        if frozen is None:
            raise InvalidInputError(f"{n}-step CONT target at t={t} needs a frozen evaluator")
        boot = {t + n: max(frozen(make_prefix(traj, t + n)))}
    return nstep_cont(stop_r, traj.rewards.final_cont, boot, t, n, T)


def q_lambda_target(traj: Trajectory, t: int, a: Action, lam: float,
                    frozen: Optional[FrozenEvaluator] = None) -> float:
    _check_lambda(lam)
    _check_t(traj, t)
    if a is Action.STOP:
        return traj.rewards.stop[t]
    T = traj.horizon
    boot = bootstrap_values(traj, frozen, first=t + 1) if t < T - 1 else None
    return q_lambda_cont(traj.rewards.stop_list(T), traj.rewards.final_cont, boot, t, lam, T)


def mc_target(traj: Trajectory, t: int, a: Action) -> float:
    _check_t(traj, t)
    if a is Action.STOP:
        return traj.rewards.stop[t]
    T = traj.horizon
    return nstep_cont(traj.rewards.stop_list(T), traj.rewards.final_cont, None, t, T - t, T)


def q0_target(traj: Trajectory, t: int, a: Action,
              frozen: Optional[FrozenEvaluator] = None) -> float:
    return n_step_target(traj, t, a, 1, frozen)


def binary_label(traj: Trajectory, t: int) -> int:
    """1 when stopping now is at least as good as the best later stop."""
    return int(mc_target(traj, t, Action.STOP) >= mc_target(traj, t, Action.CONT))


def recursive_backup_oracle(traj: Trajectory, t: int, a: Action, n: int,
                            frozen: Optional[FrozenEvaluator], discount: float = 1.0) -> float:
    """Evaluate the n-step Bellman optimality backup literally, by recursion.

    Independent of the closed forms above; supports any discount in (0, 1].
    """
    if not 0.0 < discount <= 1.0:
        raise OutOfRangeError(f"discount must lie in (0, 1], got {discount}")
    _check_t(traj, t)
    T = traj.horizon
    if not 0 <= n <= T - t:
        raise OutOfRangeError(f"n={n} outside [0, {T - t}]")

    def reward(s: int, act: Action) -> float:
        if act is Action.STOP:
            return traj.rewards.stop[s]
        return traj.rewards.final_cont if s == T - 1 else 0.0

    def backup(k: int, s: Optional[int], act: Action) -> float:
        # None is the absorbing state reached by STOP; s == T is the horizon
        if s is None or s == T:
            return 0.0
        if k == 0:
            if frozen is None:
                raise InvalidInputError("bootstrapping requires a frozen evaluator")
            q_stop, q_cont = frozen(make_prefix(traj, s))
            return q_stop if act is Action.STOP else q_cont
        nxt = None if act is Action.STOP else s + 1
        return reward(s, act) + discount * max(backup(k - 1, nxt, b) for b in Action)

    return backup(n, t, a)
