"""Binary-tree deterministic systems with a planted rewarding path.

Layout with 0-based levels ``h = 0 .. H-1``:

* ``h <= H-3``: tree levels. State index ``i`` has label ``2**h + i`` and
  ``P_h(s, a) = 2 s + a`` for ``h <= H-4``.
* ``h = H-3``: the planted pair ``(s*, a*)`` leads to ``+`` at level ``H-2``;
  every other pair leads to ``-``.
* ``h = H-2``: ``(+, a_last)`` leads to ``+`` at level ``H-1``; everything
  else leads to ``-``.
* ``h = H-1``: every pair leads to the single terminal state.

Index 0 is ``+`` and index 1 is ``-`` on the last two levels. Tree-level
features are near-orthogonal unit vectors shared by all instances with the
same ``feature_seed``; the plant never touches them.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BudgetViolationError, ConstructionFailureError, InvalidParameterError
from .explorer import ExplorationConfig, paper_beta, run_exploration
from .mdp import (
    CheckResult,
    Dynamics,
    ExplorationDataset,
    FeatureMap,
    PolicyTable,
    RewardFreeEnv,
    RewardFunctionSet,
    Trajectory,
    make_rng,
)
from .oracle import bellman_residual, solve_exact, suboptimality
from .planner import plan

MAX_DIM = 2**20
PLUS, MINUS = 0, 1
SUCCESS_GAP = 0.1
REWARD_SHIFT = 0.02


def build_near_orthogonal_features(n: int, tolerance: float = 0.01, seed: int = 0, *, max_dim: int = MAX_DIM):
    """``n`` unit vectors with pairwise ``|<phi_i, phi_j>| <= tolerance``.

    Random sign vectors scaled by ``1/sqrt(d)``; ``d`` doubles from 1 until
    every pair passes. Returns ``(vectors, d)`` with ``vectors`` of shape
    ``(n, d)``.
    """
    if n < 1:
        raise InvalidParameterError("need at least one vector")
    rng = make_rng(seed)
    d = 1
    while d <= max_dim:
        signs = rng.integers(0, 2, size=(n, d), dtype=np.int8) * np.int8(2) - np.int8(1)
        if n == 1 or _max_offdiag_count(signs) <= tolerance * d:
            return signs.astype(float) / math.sqrt(d), d
        d *= 2
    raise ConstructionFailureError(f"no {n} vectors with coherence {tolerance} up to d={max_dim}")


def _max_offdiag_count(signs: np.ndarray, chunk: int = 1 << 16) -> int:
    # Integer Gram of +-1 vectors; float32 partial sums stay exact below 2**24.
    n, d = signs.shape
    gram = np.zeros((n, n))
    for start in range(0, d, chunk):
        block = signs[:, start : start + chunk].astype(np.float32)
        gram += (block @ block.T).astype(float)
    np.fill_diagonal(gram, 0.0)
    return int(np.abs(gram).max())


@functools.lru_cache(maxsize=4)
def hard_features(H: int, feature_seed: int = 0, tolerance: float = 0.01) -> FeatureMap:
    """Feature map shared by every hard instance with this horizon and seed."""
    if H < 4:
        raise InvalidParameterError(f"hard instances need H >= 4, got {H}")
    n = 2 ** (H - 2)
    pool, d = build_near_orthogonal_features(n, tolerance, feature_seed)
    tables = [pool[: 2 ** (h + 1)].reshape(2**h, 2, d) for h in range(H - 2)]
    last2 = np.zeros((2, 2, d))
    last2[PLUS, 0, 0] = 1.0
    last2[PLUS, 1, 1] = 1.0
    last = np.zeros((2, 2, d))
    last[PLUS, 0, 0] = 1.0
    tables += [last2, last]
    return FeatureMap(tables)


def state_label(H: int, h: int, idx: int):
    if h <= H - 3:
        return 2**h + idx
    return "+" if idx == PLUS else "-"


@dataclass(frozen=True, eq=False)
class HardInstance:
    H: int
    features: FeatureMap
    planted_state: int  # label at level H-3
    planted_action: int
    last_action: int
    shift: bool
    dynamics: Dynamics
    rewards: RewardFunctionSet
    theta: tuple[np.ndarray, ...]
    q_star: tuple[np.ndarray, ...]
    path: tuple[tuple[int, int], ...]  # (state index, action) per level
    feature_seed: int = 0

    @property
    def dim(self) -> int:
        return self.features.dim

    @property
    def planted_pairs(self) -> int:
        return 2 ** (self.H - 2)

    def transition(self, h: int, label, a: int):
        """Successor label of ``label`` under action ``a`` at level ``h``."""
        idx = label - 2**h if h <= self.H - 3 else (PLUS if label == "+" else MINUS)
        nxt = int(np.argmax(self.dynamics.transitions[h][idx, a]))
        return state_label(self.H, h + 1, nxt) if h + 1 < self.H else "terminal"

    def reward_free_view(self) -> RewardFreeEnv:
        return RewardFreeEnv(self.features, self.dynamics)

    def optimal_policy(self) -> PolicyTable:
        return solve_exact(self.dynamics, self.rewards).policy

    def certificates(self) -> list[CheckResult]:
        """Linear-Q*, Bellman, reward-range and near-orthogonality checks."""
        H = self.H
        lin = max(
            float(np.abs(self.q_star[h] - self.features.tables[h] @ self.theta[h]).max())
            for h in range(H)
        )
        shift = REWARD_SHIFT if self.shift else 0.0
        base = self.rewards if not self.shift else self.rewards.shifted(-shift)
        bell = bellman_residual(self.dynamics, base, self.q_star)
        lo = min(float(t.min()) for t in base.tables)
        hi = max(float(t.max()) for t in base.tables)
        range_res = max(-0.02 - lo, hi - 0.5, 0.0)
        coh = 0.0
        for h in range(H - 2):
            rows = self.features.rows(h)
            g = rows @ rows.T
            np.fill_diagonal(g, 0.0)
            coh = max(coh, float(np.abs(g).max()) if g.size > 1 else 0.0)
        norm_res = max(
            float(np.abs(np.sqrt(np.einsum("ij,ij->i", self.features.rows(h), self.features.rows(h))) - 1).max())
            for h in range(H - 2)
        )
        return [
            CheckResult("linear-qstar", lin <= 1e-12, lin),
            CheckResult("bellman", bell <= 1e-12, bell),
            CheckResult("reward-range", range_res == 0.0, range_res, f"[{lo:.4g}, {hi:.4g}]"),
            CheckResult("feature-coherence", coh <= 0.01, coh),
            CheckResult("feature-unit-norm", norm_res <= 1e-12, norm_res),
        ]


def build_hard_instance(
    H: int,
    seed: int,
    *,
    feature_seed: int = 0,
    shift: bool = False,
    planted: tuple[int, int, int] | None = None,
) -> HardInstance:
    """Draw a planted pair uniformly from level ``H-3`` and a last action from {0, 1}.

    ``planted = (state_label, action, last_action)`` fixes the draw.
    """
    if H < 4:
        raise InvalidParameterError(f"hard instances need H >= 4, got {H}")
    features = hard_features(H, feature_seed)
    top = H - 3  # level holding the planted pair
    if planted is None:
        rng = make_rng(seed)
        pair = int(rng.integers(0, 2 ** (top + 1)))
        s_idx, a_star = divmod(pair, 2)
        last = int(rng.integers(0, 2))
    else:
        label, a_star, last = planted
        s_idx = int(label) - 2**top
        if not 0 <= s_idx < 2**top or a_star not in (0, 1) or last not in (0, 1):
            raise InvalidParameterError(f"invalid planted triple {planted!r}")
    s_star = 2**top + s_idx

    trans = []
    for h in range(top):
        n = 2**h
        p = np.zeros((n, 2, 2 * n))
        for i in range(n):
            for a in (0, 1):
                p[i, a, 2 * i + a] = 1.0
        trans.append(p)
    p = np.zeros((2**top, 2, 2))
    p[:, :, MINUS] = 1.0
    p[s_idx, a_star] = (1.0, 0.0)
    trans.append(p)
    p = np.zeros((2, 2, 2))
    p[:, :, MINUS] = 1.0
    p[PLUS, last] = (1.0, 0.0)
    trans.append(p)
    trans.append(np.ones((2, 2, 1)))
    initial = np.zeros(1)
    initial[0] = 1.0
    dyn = Dynamics(tuple(trans), initial)

    # planted path as (state index, action) per level
    path = []
    for h in range(top + 1):
        label = s_star >> (top - h)
        a = a_star if h == top else (s_star >> (top - h - 1)) & 1
        path.append((label - 2**h, a))
    path.append((PLUS, last))
    path.append((PLUS, 0))

    theta = tuple(features.tables[h][i, a] / 2.0 for h, (i, a) in enumerate(path))
    q_star = tuple(features.tables[h] @ theta[h] for h in range(H))
    rewards = []
    for h in range(H):
        if h == H - 1:
            r = q_star[h].copy()
        else:
            v_next = q_star[h + 1].max(axis=1)
            r = q_star[h] - dyn.transitions[h] @ v_next
        rewards.append(r + (REWARD_SHIFT if shift else 0.0))
    return HardInstance(
        H=H,
        features=features,
        planted_state=s_star,
        planted_action=a_star,
        last_action=last,
        shift=shift,
        dynamics=dyn,
        rewards=RewardFunctionSet(tuple(rewards)),
        theta=theta,
        q_star=q_star,
        path=tuple(path),
        feature_seed=feature_seed,
    )


# ------------------------------------------------------------ adversary game


class BudgetedEnv:
    """Reward-free view that counts episodes and logs what was really simulated."""

    def __init__(self, env: RewardFreeEnv, budget: int):
        self._env = env
        self.budget = budget
        self.features = env.features
        self.log: list[Trajectory] = []

    @property
    def horizon(self) -> int:
        return self._env.horizon

    @property
    def n_states(self):
        return self._env.n_states

    @property
    def dynamics(self) -> Dynamics:
        # exposed for test doubles that are allowed to cheat
        return self._env.dynamics

    def simulate(self, policy: PolicyTable, rng: np.random.Generator) -> Trajectory:
        if len(self.log) >= self.budget:
            raise BudgetViolationError(f"explorer asked for more than {self.budget} episodes")
        traj = self._env.simulate(policy, rng)
        self.log.append(traj)
        return traj


Explorer = Callable[[BudgetedEnv, int, np.random.Generator], ExplorationDataset]
Planner = Callable[[ExplorationDataset, RewardFunctionSet, FeatureMap], PolicyTable]


def visits_plus(traj: Trajectory, H: int) -> bool:
    return traj.states[H - 2] == PLUS


@dataclass(frozen=True)
class TrialOutcome:
    seed: int
    planted: tuple[int, int, int]
    episodes: int
    event_e: bool
    suboptimality: float
    success: bool


@dataclass(frozen=True)
class AdversaryReport:
    H: int
    budget: int
    trials: int
    success_rate: float
    event_e_rate: float
    bound: float
    outcomes: tuple[TrialOutcome, ...]

    def row(self) -> dict:
        return {
            "H": self.H,
            "budget": self.budget,
            "trials": self.trials,
            "success_rate": self.success_rate,
            "eventE_rate": self.event_e_rate,
            "bound": self.bound,
        }


def success_bound(H: int, budget: int) -> float:
    """``p + (1 - p)/2`` with ``p = min(budget / 2**(H-2), 1)``."""
    p = min(budget / 2 ** (H - 2), 1.0)
    return p + (1.0 - p) / 2.0


def run_trial(explorer: Explorer, planner: Planner, H: int, budget: int, seed: int, **instance_kw) -> TrialOutcome:
    inst = build_hard_instance(H, seed, **instance_kw)
    env = BudgetedEnv(inst.reward_free_view(), budget)
    dataset = explorer(env, budget, make_rng(seed, 1))
    if len(env.log) > budget:
        raise BudgetViolationError(f"explorer used {len(env.log)} episodes, budget {budget}")
    policy = planner(dataset, inst.rewards, inst.features)
    gap = suboptimality(inst.dynamics, inst.rewards, policy)
    event_e = not any(visits_plus(t, H) for t in env.log)
    return TrialOutcome(
        seed=seed,
        planted=(inst.planted_state, inst.planted_action, inst.last_action),
        episodes=len(env.log),
        event_e=event_e,
        suboptimality=gap,
        success=gap <= SUCCESS_GAP,
    )


def run_adversary_game(
    explorer: Explorer,
    planner: Planner,
    H: int,
    budget: int,
    trials: int,
    seed: int,
    **instance_kw,
) -> AdversaryReport:
    """Play ``trials`` independent rounds; trial ``i`` uses seed ``seed + i``."""
    if H < 4:
        raise InvalidParameterError(f"hard instances need H >= 4, got {H}")
    if budget < 0 or trials < 1:
        raise InvalidParameterError("budget must be >= 0 and trials >= 1")
    outcomes = tuple(run_trial(explorer, planner, H, budget, seed + i, **instance_kw) for i in range(trials))
    return AdversaryReport(
        H=H,
        budget=budget,
        trials=trials,
        success_rate=sum(o.success for o in outcomes) / trials,
        event_e_rate=sum(o.event_e for o in outcomes) / trials,
        bound=success_bound(H, budget),
        outcomes=outcomes,
    )


# ------------------------------------------------- stock explorers / planners


def lsvi_explorer(beta: float | None = None, *, epsilon: float = 0.1, delta: float = 0.1) -> Explorer:
    """The bonus-driven explorer with ``K = budget`` episodes."""

    def explore(env, budget, rng):
        if budget == 0:
            return ExplorationDataset.empty(env.horizon)
        d, H = env.features.dim, env.horizon
        b = paper_beta(d, H, epsilon, delta) if beta is None else beta
        config = ExplorationConfig(K=budget, beta=b, H=H, d=d, epsilon=epsilon, delta=delta)
        return run_exploration(env, config, rng).dataset

    return explore


def sweep_explorer() -> Explorer:
    """Visit every pair at level ``H-3`` in id order, then try the other last action.

    Knows the tree layout but not the plant. Stops once ``+`` at level ``H-1``
    has been seen, so ``2**(H-2) + 1`` episodes always suffice.
    """

    def explore(env, budget, rng):
        H = env.horizon
        top = H - 3
        sizes = env.n_states
        trajs = []

        def route(s_idx, a_top, a_last):
            acts = [np.zeros(n, dtype=int) for n in sizes[:H]]
            for h in range(top):
                acts[h][s_idx >> (top - h)] = (s_idx >> (top - h - 1)) & 1
            acts[top][s_idx] = a_top
            acts[H - 2][PLUS] = a_last
            return PolicyTable(tuple(acts))

        for pair in range(2 ** (top + 1)):
            if len(trajs) >= budget:
                break
            s_idx, a = divmod(pair, 2)
            t = env.simulate(route(s_idx, a, 0), rng)
            trajs.append(t)
            if visits_plus(t, H):
                if t.states[H - 1] != PLUS and len(trajs) < budget:
                    trajs.append(env.simulate(route(s_idx, a, 1), rng))
                break
        return ExplorationDataset.from_trajectories(trajs, H) if trajs else ExplorationDataset.empty(H)

    return explore


def lsvi_planner(beta: float | None = None, *, epsilon: float = 0.1, delta: float = 0.1) -> Planner:
    def planner(dataset, rewards, features):
        b = paper_beta(features.dim, features.horizon, epsilon, delta) if beta is None else beta
        return plan(dataset, rewards, b, features).policy

    return planner


def transcripts_agree(a: ExplorationDataset, b: ExplorationDataset, H: int) -> bool:
    """Observations match until the first episode that reaches ``+`` at level ``H-2``.

    That episode must agree up to and including its level ``H-2`` state; later
    episodes are not compared because the explorer may legitimately diverge.
    """
    for k in range(max(a.K, b.K)):
        if k >= a.K or k >= b.K:
            return False
        ta, tb = a.trajectories[k], b.trajectories[k]
        hit = visits_plus(ta, H) or visits_plus(tb, H)
        if hit:
            return ta.states[: H - 1] == tb.states[: H - 1] and ta.actions[: H - 2] == tb.actions[: H - 2]
        if ta != tb:
            return False
    return True
