"""Exact finite-horizon dynamic programming over explicit transition tables.

Linear models are materialised to ``P[h][s, a, s']`` first, so nothing here
relies on the linear structure the rest of the package exploits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IncompletePolicyError, InvalidModelError
from .mdp import Dynamics, PolicyTable, RewardFunctionSet, as_dynamics


@dataclass(frozen=True, eq=False)
class ExactSolution:
    q: tuple[np.ndarray, ...]  # q[h][s, a]
    v: tuple[np.ndarray, ...]  # v[h][s], length H + 1 with v[H] == 0
    policy: PolicyTable
    value: float  # E_{s ~ mu} V*_0(s)


def _check(dyn: Dynamics, rewards: RewardFunctionSet) -> None:
    if rewards.horizon != dyn.horizon:
        raise InvalidModelError(f"rewards cover {rewards.horizon} levels, model has {dyn.horizon}")


def solve_exact(model, rewards: RewardFunctionSet) -> ExactSolution:
    dyn = as_dynamics(model)
    _check(dyn, rewards)
    H = dyn.horizon
    v = [None] * (H + 1)
    q = [None] * H
    v[H] = np.zeros(dyn.n_states[H])
    for h in range(H - 1, -1, -1):
        q[h] = rewards.level(h) + dyn.transitions[h] @ v[h + 1]
        v[h] = q[h].max(axis=1)
    policy = PolicyTable.greedy(q)
    return ExactSolution(tuple(q), tuple(v), policy, float(dyn.initial @ v[0]))


def policy_values(model, rewards: RewardFunctionSet, policy: PolicyTable) -> tuple[np.ndarray, ...]:
    """``V^pi_h`` for every level (``H + 1`` arrays, the last one zero)."""
    dyn = as_dynamics(model)
    _check(dyn, rewards)
    H = dyn.horizon
    v = [None] * (H + 1)
    v[H] = np.zeros(dyn.n_states[H])
    for h in range(H - 1, -1, -1):
        a = policy.actions[h]
        if a.shape[0] != dyn.n_states[h]:
            raise IncompletePolicyError(f"policy covers {a.shape[0]} states at level {h}")
        if np.any(a < 0):
            raise IncompletePolicyError(f"policy undefined at level {h}, state {int(np.argmax(a < 0))}")
        s = np.arange(dyn.n_states[h])
        v[h] = rewards.level(h)[s, a] + dyn.transitions[h][s, a] @ v[h + 1]
    return tuple(v)


def evaluate_policy(model, rewards: RewardFunctionSet, policy: PolicyTable) -> float:
    dyn = as_dynamics(model)
    return float(dyn.initial @ policy_values(dyn, rewards, policy)[0])


def suboptimality(model, rewards: RewardFunctionSet, policy: PolicyTable) -> float:
    return solve_exact(model, rewards).value - evaluate_policy(model, rewards, policy)


def bellman_residual(model, rewards: RewardFunctionSet, q) -> float:
    """``max |Q_h - r_h - P_h max_a Q_{h+1}|`` over all levels and pairs."""
    dyn = as_dynamics(model)
    worst = 0.0
    for h in range(dyn.horizon):
        nxt = q[h + 1].max(axis=1) if h + 1 < dyn.horizon else np.zeros(dyn.n_states[h + 1])
        target = rewards.level(h) + dyn.transitions[h] @ nxt
        worst = max(worst, float(np.abs(q[h] - target).max()))
    return worst
