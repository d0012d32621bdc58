import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rewardfree.errors import IncompletePolicyError, MissingRewardError
from rewardfree.hardness import build_hard_instance
from rewardfree.mdp import (
    Dynamics,
    PolicyTable,
    RewardFunctionSet,
    make_rng,
    random_tabular_mdp,
    simulate_episodes,
)
from rewardfree.oracle import bellman_residual, evaluate_policy, policy_values, solve_exact, suboptimality


def brute_force_value(tab):
    """Best expected return over every deterministic Markov policy, by enumeration."""
    dyn, rew = tab.dynamics, tab.rewards
    sizes = dyn.n_states[:-1]
    A = dyn.n_actions
    best = -np.inf
    for flat in itertools.product(range(A), repeat=sum(sizes)):
        acts, i = [], 0
        for n in sizes:
            acts.append(np.array(flat[i : i + n]))
            i += n
        dist, total = dyn.initial.copy(), 0.0
        for h, a in enumerate(acts):
            s = np.arange(sizes[h])
            total += dist @ rew.tables[h][s, a]
            dist = dist @ dyn.transitions[h][s, a]
        best = max(best, total)
    return best


def test_bandit():
    dyn = Dynamics((np.ones((1, 2, 1)),), np.ones(1))
    sol = solve_exact(dyn, RewardFunctionSet((np.array([[0.3, 0.7]]),)))
    assert sol.value == pytest.approx(0.7)
    assert sol.policy(0, 0) == 1


def test_zero_rewards():
    tab = random_tabular_mdp(3, 2, 3, seed=0)
    zero = RewardFunctionSet(tuple(np.zeros_like(t) for t in tab.rewards.tables))
    sol = solve_exact(tab, zero)
    assert all(np.array_equal(v, np.zeros_like(v)) for v in sol.v)
    assert evaluate_policy(tab, zero, PolicyTable.constant([3, 3, 3], 1)) == 0.0


def test_hard_instance_value():
    inst = build_hard_instance(5, seed=0)
    sol = solve_exact(inst.dynamics, inst.rewards)
    assert sol.value == pytest.approx(0.5, abs=1e-12)
    s, a = inst.path[0]
    assert sol.q[0][s, a] == pytest.approx(0.5, abs=1e-12)


def test_missing_reward():
    tab = random_tabular_mdp(2, 2, 1, seed=0)
    r = np.array([[0.1, np.nan], [0.2, 0.3]])
    with pytest.raises(MissingRewardError):
        solve_exact(tab, RewardFunctionSet((r,)))


def test_incomplete_policy():
    tab = random_tabular_mdp(2, 2, 1, seed=0)
    with pytest.raises(IncompletePolicyError):
        evaluate_policy(tab, tab.rewards, PolicyTable((np.array([0, -1]),)))


@given(st.integers(0, 10_000))
def test_matches_brute_force(seed):
    tab = random_tabular_mdp([2, 2, 2], 2, 2, seed)
    assert solve_exact(tab, tab.rewards).value == pytest.approx(brute_force_value(tab), abs=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 4))
def test_optimal_policy_consistency(seed, H):
    tab = random_tabular_mdp(3, 3, H, seed)
    sol = solve_exact(tab, tab.rewards)
    assert bellman_residual(tab, tab.rewards, sol.q) <= 1e-12
    assert evaluate_policy(tab, tab.rewards, sol.policy) == sol.value
    assert suboptimality(tab, tab.rewards, sol.policy) == 0.0
    rng = np.random.default_rng(seed)
    other = PolicyTable(tuple(rng.integers(0, 3, 3) for _ in range(H)))
    assert suboptimality(tab, tab.rewards, other) >= -1e-12


@given(st.integers(0, 10_000), st.integers(0, 2), st.floats(-0.5, 0.5))
def test_level_shift_invariance(seed, level, c):
    tab = random_tabular_mdp(3, 2, 3, seed)
    tables = list(tab.rewards.tables)
    tables[level] = tables[level] + c
    shifted = RewardFunctionSet(tuple(tables))
    pol = PolicyTable(tuple(np.random.default_rng(seed).integers(0, 2, 3) for _ in range(3)))
    assert solve_exact(tab, shifted).value == pytest.approx(solve_exact(tab, tab.rewards).value + c, abs=1e-12)
    assert evaluate_policy(tab, shifted, pol) == pytest.approx(evaluate_policy(tab, tab.rewards, pol) + c, abs=1e-12)
    assert suboptimality(tab, shifted, pol) == pytest.approx(suboptimality(tab, tab.rewards, pol), abs=1e-12)


def test_policy_values_terminal_zero():
    tab = random_tabular_mdp(3, 2, 2, seed=1)
    vals = policy_values(tab, tab.rewards, PolicyTable.constant([3, 3], 0))
    assert len(vals) == 3 and np.array_equal(vals[2], np.zeros(3))


def monte_carlo(tab, policy, n, seed):
    states, actions = simulate_episodes(tab, policy, n, make_rng(seed))
    returns = sum(tab.rewards.tables[h][states[:, h], actions[:, h]] for h in range(tab.dynamics.horizon))
    return returns.mean(), returns.std(ddof=1) / np.sqrt(n)


def test_monte_carlo_agreement():
    tab = random_tabular_mdp(4, 2, 3, seed=3)
    pol = PolicyTable(tuple(np.array([0, 1, 1, 0]) for _ in range(3)))
    mean, se = monte_carlo(tab, pol, 100_000, seed=0)
    assert abs(mean - evaluate_policy(tab, tab.rewards, pol)) <= 3 * se
