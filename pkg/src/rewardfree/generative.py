"""Exploration and exact planning with a simulator, for deterministic systems
whose optimal Q-function is linear in the features.

Exploration picks, per level, a set of pairs whose features span every
feature at that level and asks the simulator for their successors. Planning
fills in ``Q`` at those pairs through the Bellman equation and extends it
linearly to every other pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MissingRewardError, ProbeFailureError, SpanViolationError
from .mdp import Dynamics, FeatureMap, PolicyTable, RewardFunctionSet, as_dynamics

RANK_TOL = 1e-9


def find_feature_basis(table: np.ndarray, tol: float = RANK_TOL) -> list[tuple[int, int]]:
    """Greedy sweep over ``(state, action)`` in id order.

    A pair joins the basis when its feature has a component of norm above
    ``tol`` outside the span of the pairs already chosen.
    """
    n_s, n_a, r = table.shape
    basis = np.zeros((0, r))
    chosen = []
    for s in range(n_s):
        for a in range(n_a):
            z = table[s, a]
            res = z - basis.T @ (basis @ z)
            res = res - basis.T @ (basis @ res)
            norm = float(np.linalg.norm(res))
            if norm > tol:
                basis = np.vstack([basis, res / norm])
                chosen.append((s, a))
    return chosen


@dataclass(frozen=True)
class LevelProbe:
    pairs: tuple[tuple[int, int], ...]
    successors: tuple[int, ...]


@dataclass(frozen=True)
class BasisProbe:
    levels: tuple[LevelProbe, ...]

    @property
    def queries(self) -> int:
        return sum(len(lv.pairs) for lv in self.levels)

    def rows(self):
        """``(h, state, action, next_state)`` for every query, in order."""
        for h, lv in enumerate(self.levels):
            for (s, a), t in zip(lv.pairs, lv.successors):
                yield h, s, a, t


class Simulator:
    """Generative access to a deterministic system; counts queries."""

    def __init__(self, model):
        self._dyn: Dynamics = as_dynamics(model)
        self.queries = 0

    def query(self, h: int, s: int, a: int) -> int:
        self.queries += 1
        try:
            p = self._dyn.transitions[h][s, a]
        except IndexError as exc:
            raise ProbeFailureError(f"no transition at level {h}, state {s}, action {a}") from exc
        nxt = int(np.argmax(p))
        if abs(p[nxt] - 1.0) > 1e-12:
            raise ProbeFailureError(f"transition at level {h}, state {s}, action {a} is not deterministic")
        return nxt


def generative_explore(simulator, features: FeatureMap) -> BasisProbe:
    levels = []
    for h in range(features.horizon):
        pairs = find_feature_basis(features.design(h))
        succ = tuple(simulator.query(h, s, a) for s, a in pairs)
        levels.append(LevelProbe(tuple(pairs), succ))
    return BasisProbe(tuple(levels))


def generative_q_values(
    probe: BasisProbe, rewards: RewardFunctionSet, features: FeatureMap
) -> tuple[np.ndarray, ...]:
    H = features.horizon
    q = [None] * H
    v_next = None
    for h in range(H - 1, -1, -1):
        z = features.design(h)
        lv = probe.levels[h]
        r = rewards.tables[h]
        q_basis = np.empty(len(lv.pairs))
        for i, ((s, a), t) in enumerate(zip(lv.pairs, lv.successors)):
            if np.isnan(r[s, a]):
                raise MissingRewardError(f"reward undefined at level {h}, state {s}, action {a}")
            q_basis[i] = r[s, a] + (v_next[t] if v_next is not None else 0.0)
        rows = z.reshape(-1, z.shape[2])
        if lv.pairs:
            basis = np.array([z[s, a] for s, a in lv.pairs])  # (d', r)
            coef, *_ = np.linalg.lstsq(basis.T, rows.T, rcond=None)  # (d', n)
            resid = float(np.abs(basis.T @ coef - rows.T).max())
            values = coef.T @ q_basis
        else:
            resid = float(np.abs(rows).max())
            values = np.zeros(rows.shape[0])
        if resid > RANK_TOL:
            raise SpanViolationError(f"level {h} feature lies outside the probed span (residual {resid:.3g})")
        q[h] = values.reshape(z.shape[:2])
        v_next = q[h].max(axis=1)
    return tuple(q)


def generative_plan(probe: BasisProbe, rewards: RewardFunctionSet, features: FeatureMap) -> PolicyTable:
    return PolicyTable.greedy(generative_q_values(probe, rewards, features))
