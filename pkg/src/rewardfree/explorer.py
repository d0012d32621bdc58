"""Reward-free exploration with least-squares value iteration and UCB bonuses.

Each episode runs a backward pass in which the only reward is the scaled
bonus ``u / H``, then follows the greedy policy once and records the
trajectory. Rewards of the environment are never consulted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractViolationError, InvalidParameterError
from .linalg import CovarianceAccumulator, cov_new, cov_rank1_update, ridge_solve
from .mdp import ExplorationDataset, PolicyTable

DEFAULT_C_BETA = 0.1
# Picked so the reference anchor instance (d=6, H=4, eps=delta=0.1) asks for
# roughly 700 episodes.
DEFAULT_C_K = 1e-6


def _log_term(d: int, H: int, epsilon: float, delta: float) -> float:
    if epsilon <= 0 or delta <= 0:
        raise InvalidParameterError("epsilon and delta must be positive")
    val = math.log(d * H / (delta * epsilon))
    if val <= 0:
        raise InvalidParameterError("d * H / (delta * epsilon) must exceed 1")
    return val


def paper_beta(d: int, H: int, epsilon: float = 0.1, delta: float = 0.1, c_beta: float = DEFAULT_C_BETA) -> float:
    """``c_beta * d * H * sqrt(log(d H / (delta epsilon)))``."""
    return c_beta * d * H * math.sqrt(_log_term(d, H, epsilon, delta))


def paper_episodes(d: int, H: int, epsilon: float = 0.1, delta: float = 0.1, c_k: float = DEFAULT_C_K) -> int:
    """``c_K * d^3 H^6 log(d H / (delta epsilon)) / epsilon^2``, rounded up."""
    return max(1, math.ceil(c_k * d**3 * H**6 * _log_term(d, H, epsilon, delta) / epsilon**2))


def value_sum_bound(d: int, H: int, K: int, delta: float, c: float = 10.0) -> float:
    """``c * sqrt(d^3 H^4 K log(d K H / delta))``, the cap on ``sum_k V_1^k``."""
    return c * math.sqrt(d**3 * H**4 * K * math.log(d * K * H / delta))


@dataclass(frozen=True)
class ExplorationConfig:
    K: int
    beta: float
    H: int
    d: int
    epsilon: float = 0.1
    delta: float = 0.1
    c_beta: float | None = None

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise InvalidParameterError(f"K must be a positive integer, got {self.K!r}")
        if not self.beta > 0:
            raise InvalidParameterError(f"beta must be positive, got {self.beta!r}")
        if self.H < 1 or self.d < 1:
            raise InvalidParameterError("H and d must be positive")

    @classmethod
    def paper_default(
        cls,
        d: int,
        H: int,
        *,
        epsilon: float = 0.1,
        delta: float = 0.1,
        c_beta: float = DEFAULT_C_BETA,
        c_k: float = DEFAULT_C_K,
        K: int | None = None,
    ) -> "ExplorationConfig":
        beta = paper_beta(d, H, epsilon, delta, c_beta)
        if K is None:
            K = paper_episodes(d, H, epsilon, delta, c_k)
        return cls(K=K, beta=beta, H=H, d=d, epsilon=epsilon, delta=delta, c_beta=c_beta)


def bonus(acc: CovarianceAccumulator, phi, beta: float, H: float) -> float:
    return min(beta * math.sqrt(acc.quadratic_form(phi)), float(H))


def exploration_reward(u: float, H: float) -> float:
    if not (0.0 <= u <= H):
        raise ContractViolationError(f"bonus {u!r} outside [0, {H}]")
    return u / H


def bonus_rows(acc: CovarianceAccumulator, rows: np.ndarray, beta: float, H: float) -> np.ndarray:
    return np.minimum(beta * np.sqrt(acc.quadratic_forms(rows)), float(H))


@dataclass(frozen=True, eq=False)
class EpisodeValueEstimate:
    """Backward-pass output for one episode, tables indexed ``[s, a]``."""

    weights: tuple[np.ndarray, ...]
    bonus: tuple[np.ndarray, ...]
    q: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]  # H + 1 entries, last is zero
    policy: PolicyTable
    accumulators: tuple[CovarianceAccumulator, ...] | None = None

    @property
    def reward(self) -> tuple[np.ndarray, ...]:
        H = len(self.q)
        return tuple(u / H for u in self.bonus)


@dataclass(frozen=True, eq=False)
class ExplorationResult:
    dataset: ExplorationDataset
    v1: np.ndarray  # V_1^k(s_1^k) per episode
    estimates: list[EpisodeValueEstimate] | None = None


def _view(env):
    return env.reward_free_view() if hasattr(env, "reward_free_view") else env


def _check_config(features, config: ExplorationConfig) -> None:
    if config.H != features.horizon:
        raise InvalidParameterError(f"config horizon {config.H} but environment has {features.horizon}")
    if config.d != features.dim:
        raise InvalidParameterError(f"config dimension {config.d} but features have {features.dim}")


def backward_pass(env, history: ExplorationDataset, config: ExplorationConfig) -> EpisodeValueEstimate:
    """Reference backward pass: rebuilds every ``Lambda_h`` from ``history``."""
    features = _view(env).features
    _check_config(features, config)
    H, beta = config.H, config.beta
    n_states = features.n_states
    weights, bonuses, qs = [None] * H, [None] * H, [None] * H
    vs = [None] * (H + 1)
    accs = [None] * H
    for h in range(H - 1, -1, -1):
        z = features.design(h)
        acc = cov_new(z.shape[2])
        feats = [z[s, a] for s, a in zip(history.states[:, h], history.actions[:, h])]
        for phi in feats:
            cov_rank1_update(acc, phi)
        if h == H - 1:
            targets = [0.0] * history.K
        else:
            targets = [vs[h + 1][s] for s in history.states[:, h + 1]]
        w = ridge_solve(acc, feats, targets).weights
        rows = z.reshape(-1, z.shape[2])
        u = bonus_rows(acc, rows, beta, H)
        q = np.minimum(rows @ w + u / H + u, H).reshape(n_states[h], -1)
        weights[h], bonuses[h], qs[h], accs[h] = w, u.reshape(q.shape), q, acc
        vs[h] = q.max(axis=1)
    vs[H] = np.zeros(_view(env).n_states[H])
    return EpisodeValueEstimate(
        tuple(weights), tuple(bonuses), tuple(qs), tuple(vs), PolicyTable.greedy(qs), tuple(accs)
    )


def run_exploration(
    env, config: ExplorationConfig, rng: np.random.Generator, *, keep_estimates: bool = False
) -> ExplorationResult:
    """Run ``config.K`` exploration episodes.

    ``Lambda_h`` and the successor-weighted feature sums are maintained
    incrementally (one rank-1 update per level per episode); the result
    matches :func:`backward_pass` on each prefix.
    """
    view = _view(env)
    features = view.features
    _check_config(features, config)
    H, K, beta = config.H, config.K, config.beta
    n_states = view.n_states
    designs = [features.design(h) for h in range(H)]
    rows = [z.reshape(-1, z.shape[2]) for z in designs]
    accs = [CovarianceAccumulator(z.shape[2]) for z in designs]
    # succ[h][s'] = sum of features at level h whose successor was s'
    succ = [np.zeros((n_states[h + 1], z.shape[2])) for h, z in enumerate(designs)]
    states = np.empty((K, H + 1), dtype=np.int64)
    actions = np.empty((K, H), dtype=np.int64)
    v1 = np.empty(K)
    estimates = [] if keep_estimates else None
    zero = np.zeros(n_states[H])
    for k in range(K):
        v_next = zero
        weights, bonuses, qs = [None] * H, [None] * H, [None] * H
        vs = [None] * (H + 1)
        vs[H] = zero
        for h in range(H - 1, -1, -1):
            acc = accs[h]
            u = bonus_rows(acc, rows[h], beta, H)
            w = acc.inverse @ (succ[h].T @ v_next)
            q = np.minimum(rows[h] @ w + u / H + u, H).reshape(n_states[h], -1)
            v_next = q.max(axis=1)
            weights[h], bonuses[h], qs[h], vs[h] = w, u.reshape(q.shape), q, v_next
        policy = PolicyTable.greedy(qs)
        traj = view.simulate(policy, rng)
        states[k] = traj.states
        actions[k] = traj.actions
        v1[k] = vs[0][traj.states[0]]
        if keep_estimates:
            estimates.append(
                EpisodeValueEstimate(tuple(weights), tuple(bonuses), tuple(qs), tuple(vs), policy)
            )
        for h in range(H):
            z = designs[h][traj.states[h], traj.actions[h]]
            accs[h].update(z)
            succ[h][traj.states[h + 1]] += z
    return ExplorationResult(ExplorationDataset(states, actions), v1, estimates)
