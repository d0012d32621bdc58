"""Planning from a fixed reward-free dataset for a given set of rewards."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError
from .explorer import bonus_rows
from .linalg import CovarianceAccumulator
from .mdp import ExplorationDataset, FeatureMap, PolicyTable, RewardFunctionSet


@dataclass(frozen=True, eq=False)
class PlanningResult:
    policy: PolicyTable
    weights: tuple[np.ndarray, ...]
    bonus: tuple[np.ndarray, ...]  # u_h[s, a]
    q: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]  # H + 1 entries; v[H] is zero over observed successors


def _features(view) -> FeatureMap:
    return view if isinstance(view, FeatureMap) else view.features


def _level_accumulator(dataset: ExplorationDataset, z: np.ndarray, h: int) -> CovarianceAccumulator:
    return CovarianceAccumulator.from_rows(z[dataset.states[:, h], dataset.actions[:, h]])


def _check(dataset: ExplorationDataset, features: FeatureMap) -> None:
    if dataset.K and dataset.H != features.horizon:
        raise InvalidParameterError(
            f"dataset horizon {dataset.H} does not match feature horizon {features.horizon}"
        )


def planning_bonus_table(dataset: ExplorationDataset, beta: float, view) -> tuple[np.ndarray, ...]:
    """``u_h[s, a] = min(beta * ||phi(s, a)||_{Lambda_h^-1}, H)`` with all ``K`` episodes."""
    features = _features(view)
    _check(dataset, features)
    H = features.horizon
    out = []
    for h in range(H):
        z = features.design(h)
        acc = _level_accumulator(dataset, z, h)
        out.append(bonus_rows(acc, z.reshape(-1, z.shape[2]), beta, H).reshape(z.shape[:2]))
    return tuple(out)


def plan(dataset: ExplorationDataset, rewards: RewardFunctionSet, beta: float, view) -> PlanningResult:
    """One optimistic backward LSVI pass; returns the greedy policy.

    Pure in its inputs: the dataset and rewards are read, never modified, so
    any number of reward sets can be planned against one dataset.
    """
    features = _features(view)
    _check(dataset, features)
    if not beta > 0:
        raise InvalidParameterError(f"beta must be positive, got {beta!r}")
    H = features.horizon
    if rewards.horizon != H:
        raise InvalidParameterError(f"rewards cover {rewards.horizon} levels, features {H}")
    weights, bonuses, qs = [None] * H, [None] * H, [None] * H
    vs = [None] * (H + 1)
    n_term = int(dataset.states[:, H].max()) + 1 if dataset.K else 1
    dyn = getattr(view, "dynamics", None)
    if dyn is not None:
        n_term = max(n_term, dyn.n_states[H])
    vs[H] = np.zeros(n_term)
    for h in range(H - 1, -1, -1):
        r = rewards.level(h)
        z = features.design(h)
        if r.shape != z.shape[:2]:
            raise InvalidParameterError(f"reward table at level {h} has shape {r.shape}")
        rows = z.reshape(-1, z.shape[2])
        acc = _level_accumulator(dataset, z, h)
        feats = z[dataset.states[:, h], dataset.actions[:, h]]
        targets = vs[h + 1][dataset.states[:, h + 1]]
        w = acc.inverse @ (feats.T @ targets) if dataset.K else np.zeros(z.shape[2])
        u = bonus_rows(acc, rows, beta, H)
        q = np.minimum(rows @ w + r.reshape(-1) + u, H).reshape(r.shape)
        weights[h], bonuses[h], qs[h] = w, u.reshape(r.shape), q
        vs[h] = q.max(axis=1)
    return PlanningResult(PolicyTable.greedy(qs), tuple(weights), tuple(bonuses), tuple(qs), tuple(vs))
