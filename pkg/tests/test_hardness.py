import itertools
import math

import numpy as np
import pytest

from rewardfree.errors import BudgetViolationError, InvalidParameterError
from rewardfree.hardness import (
    PLUS,
    build_hard_instance,
    build_near_orthogonal_features,
    lsvi_explorer,
    lsvi_planner,
    run_adversary_game,
    run_trial,
    success_bound,
    sweep_explorer,
    transcripts_agree,
    visits_plus,
)
from rewardfree.mdp import ExplorationDataset, PolicyTable, make_rng
from rewardfree.oracle import evaluate_policy, solve_exact, suboptimality


def test_near_orthogonal_small_cases():
    v, d = build_near_orthogonal_features(1)
    assert d == 1 and v.shape == (1, 1) and abs(np.linalg.norm(v[0]) - 1) < 1e-15
    v, d = build_near_orthogonal_features(2, seed=3)
    assert abs(v[0] @ v[1]) <= 0.01


def test_near_orthogonal_64():
    v, d = build_near_orthogonal_features(64, seed=5)
    assert v.shape == (64, d)
    assert np.allclose(np.linalg.norm(v, axis=1), 1.0, atol=1e-12)
    worst = max(abs(float(v[i] @ v[j])) for i, j in itertools.combinations(range(64), 2))
    assert worst <= 0.01
    assert d <= 4e5 * math.log(64)


def test_h_too_small():
    with pytest.raises(InvalidParameterError):
        build_hard_instance(3, seed=0)


def test_tree_transitions_h5():
    inst = build_hard_instance(5, seed=0)
    # levels are 0-based here; label 1 lives at level 0, labels 2..3 at level 1
    assert inst.transition(0, 1, 0) == 2
    assert inst.transition(0, 1, 1) == 3
    assert inst.transition(1, 3, 1) == 7
    assert inst.transition(1, 2, 0) == 4


@pytest.mark.parametrize("seed", range(5))
def test_terminal_rewards(seed):
    inst = build_hard_instance(6, seed)
    last = inst.rewards.tables[-1]
    assert last[PLUS, 0] == 0.5
    assert np.count_nonzero(last) == 1
    shifted = build_hard_instance(6, seed, shift=True)
    assert shifted.rewards.tables[-1] == pytest.approx(last + 0.02)


@pytest.mark.parametrize("H", [4, 5, 6])
def test_planted_q_star(H):
    inst = build_hard_instance(H, seed=1)
    exact = solve_exact(inst.dynamics, inst.rewards)
    for h, (s, a) in enumerate(inst.path):
        assert inst.q_star[h][s, a] == pytest.approx(0.5, abs=1e-12)
        off = np.abs(inst.q_star[h]).copy()
        off[s, a] = 0
        assert off.max() <= 0.01
        assert np.abs(exact.q[h] - inst.q_star[h]).max() <= 1e-12
    assert all(c.passed for c in inst.certificates())


def test_unique_near_optimal_path():
    H = 6
    inst = build_hard_instance(H, seed=2)
    opt = inst.optimal_policy()
    assert evaluate_policy(inst.dynamics, inst.rewards, opt) == pytest.approx(0.5, abs=1e-12)
    for h, (s, a) in enumerate(inst.path[:-1]):
        acts = [x.copy() for x in opt.actions]
        acts[h][s] = 1 - a
        gap = suboptimality(inst.dynamics, inst.rewards, PolicyTable(tuple(acts)))
        assert gap >= 0.49 - 0.02 * H and gap > 0.1


def test_wrong_last_action_loses_everything():
    inst = build_hard_instance(6, seed=4)
    acts = [x.copy() for x in inst.optimal_policy().actions]
    acts[4][PLUS] = 1 - inst.last_action
    gap = suboptimality(inst.dynamics, inst.rewards, PolicyTable(tuple(acts)))
    assert gap == pytest.approx(0.5, abs=0.011)


def test_plant_is_uniform():
    H = 5
    counts = {}
    for seed in range(800):
        inst = build_hard_instance(H, seed)
        key = (inst.planted_state, inst.planted_action, inst.last_action)
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 2 ** (H - 2) * 2
    expected = 800 / len(counts)
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    assert chi2 < 45  # 15 dof, p ~ 1e-4


def test_features_do_not_depend_on_plant():
    a = build_hard_instance(6, seed=0)
    b = build_hard_instance(6, seed=1)
    assert (a.planted_state, a.planted_action, a.last_action) != (b.planted_state, b.planted_action, b.last_action)
    assert all(x is y or np.array_equal(x, y) for x, y in zip(a.features.tables, b.features.tables))


@pytest.mark.parametrize("H", [5, 6, 8])
def test_rewards_independent_of_last_action(H):
    top = 2 ** (H - 3)
    for label in (top, top + top // 2, 2 * top - 1):
        for a in (0, 1):
            r0 = build_hard_instance(H, 0, planted=(label, a, 0)).rewards
            r1 = build_hard_instance(H, 0, planted=(label, a, 1)).rewards
            assert all(np.array_equal(x, y) for x, y in zip(r0.tables, r1.tables))


def test_information_barrier_paired_plants():
    H = 6
    explorer = lsvi_explorer()
    top = 2 ** (H - 3)
    rng = np.random.default_rng(0)
    for i in range(50):
        label = int(top + rng.integers(top))
        a = int(rng.integers(2))
        data = []
        for last in (0, 1):
            inst = build_hard_instance(H, 0, planted=(label, a, last))
            env = inst.reward_free_view()
            data.append(explorer(env, 6, make_rng(100 + i, 1)))
        assert transcripts_agree(data[0], data[1], H)


def test_transcripts_agree_detects_difference():
    a = ExplorationDataset([[0, 0, 0, 1, 1, 0]], [[0, 0, 0, 0, 0]])
    b = ExplorationDataset([[0, 1, 0, 1, 1, 0]], [[1, 0, 0, 0, 0]])
    assert not transcripts_agree(a, b, 5)
    assert transcripts_agree(a, a, 5)
    assert not transcripts_agree(a, a.prefix(0), 5)


# ------------------------------------------------------------ test doubles


def _succ(dyn, h, s, a):
    return int(np.argmax(dyn.transitions[h][s, a]))


def _reaches_plus(dyn, h, s, H):
    if h == H - 2:
        return s == PLUS
    return any(_reaches_plus(dyn, h + 1, _succ(dyn, h, s, a), H) for a in (0, 1))


def omniscient_explorer(env, budget, rng):
    """Reads the transition tables, which no real explorer may do."""
    dyn, H = env.dynamics, env.horizon
    acts = [np.zeros(n, dtype=int) for n in dyn.n_states[:-1]]
    s = 0
    for h in range(H - 1):
        if h < H - 2:
            a = next(b for b in (0, 1) if _reaches_plus(dyn, h + 1, _succ(dyn, h, s, b), H))
        else:
            a = next(b for b in (0, 1) if _succ(dyn, h, s, b) == PLUS)
        acts[h][s] = a
        s = _succ(dyn, h, s, a)
    pol = PolicyTable(tuple(acts))
    return ExplorationDataset.from_trajectories([env.simulate(pol, rng) for _ in range(budget)], H)


def reward_matching_planner(H):
    """Recovers the plant from the rewards, the last action from the data if it can.

    Rewards pin down the planted pair but not the last action; without a
    visit to ``+`` the last action is a guess (always 0 here).
    """
    top = 2 ** (H - 3)
    candidates = [(label, a) for label in range(top, 2 * top) for a in (0, 1)]

    def planner(dataset, rewards, features):
        for label, a in candidates:
            cand = build_hard_instance(H, 0, planted=(label, a, 0))
            if all(np.array_equal(x, y) for x, y in zip(cand.rewards.tables, rewards.tables)):
                break
        else:
            raise AssertionError("no candidate matches the rewards")
        last = 0
        for t in dataset.trajectories:
            if visits_plus(t, H):
                took = t.actions[H - 2]
                last = took if t.states[H - 1] == PLUS else 1 - took
        return build_hard_instance(H, 0, planted=(label, a, last)).optimal_policy()

    return planner


def test_omniscient_explorer_succeeds():
    rep = run_adversary_game(omniscient_explorer, lsvi_planner(0.01), 6, 3, 20, seed=0)
    assert rep.success_rate == 1.0 and rep.event_e_rate == 0.0


@pytest.mark.parametrize("H", [5, 6])
def test_exhaustive_sweep_succeeds(H):
    rep = run_adversary_game(sweep_explorer(), lsvi_planner(0.01), H, 2 ** (H - 2), 30, seed=7)
    assert rep.success_rate == 1.0
    # worst case: plant on the last pair and last action 1
    worst = run_trial(sweep_explorer(), lsvi_planner(0.01), H, 2 ** (H - 2), 0,
                      planted=(2 ** (H - 2) - 1, 1, 1))
    assert worst.success and worst.episodes == 2 ** (H - 2)


def test_zero_budget_is_a_coin_flip():
    T = 200
    rep = run_adversary_game(lsvi_explorer(), reward_matching_planner(5), 5, 0, T, seed=0)
    assert rep.event_e_rate == 1.0
    sigma = math.sqrt(0.25 / T)
    assert abs(rep.success_rate - 0.5) <= 3 * sigma


def test_matching_planner_meets_counting_bound():
    H, N, T = 6, 4, 200
    rep = run_adversary_game(sweep_explorer(), reward_matching_planner(H), H, N, T, seed=1)
    p = N / 2 ** (H - 2)
    assert rep.bound == pytest.approx(p + (1 - p) / 2)
    sigma = math.sqrt(rep.bound * (1 - rep.bound) / T)
    assert abs(rep.success_rate - rep.bound) <= 3 * sigma + 1e-12
    assert abs(rep.event_e_rate - (1 - p)) <= 3 * math.sqrt(p * (1 - p) / T)


def test_budget_enforced():
    def greedy(env, budget, rng):
        pol = PolicyTable.constant(env.n_states[:-1], 0)
        return ExplorationDataset.from_trajectories([env.simulate(pol, rng) for _ in range(budget + 1)], env.horizon)

    with pytest.raises(BudgetViolationError):
        run_adversary_game(greedy, lsvi_planner(), 5, 2, 1, seed=0)


def test_event_flag_comes_from_the_log():
    def liar(env, budget, rng):
        omniscient_explorer(env, budget, rng)
        return ExplorationDataset.empty(env.horizon)

    rep = run_adversary_game(liar, lsvi_planner(0.01), 5, 2, 5, seed=0)
    assert rep.event_e_rate == 0.0
    assert all(o.episodes == 2 for o in rep.outcomes)


def test_single_trial_report():
    rep = run_adversary_game(lsvi_explorer(), lsvi_planner(), 5, 1, 1, seed=3)
    row = rep.row()
    assert list(row) == ["H", "budget", "trials", "success_rate", "eventE_rate", "bound"]
    assert row["trials"] == 1 and row["success_rate"] in (0.0, 1.0) and row["eventE_rate"] in (0.0, 1.0)
    assert row["bound"] == success_bound(5, 1)


def test_game_is_deterministic():
    a = run_adversary_game(lsvi_explorer(), lsvi_planner(), 5, 3, 10, seed=4)
    b = run_adversary_game(lsvi_explorer(), lsvi_planner(), 5, 3, 10, seed=4)
    assert a.outcomes == b.outcomes


def test_game_rejects_bad_parameters():
    with pytest.raises(InvalidParameterError):
        run_adversary_game(lsvi_explorer(), lsvi_planner(), 3, 1, 1, seed=0)
    with pytest.raises(InvalidParameterError):
        run_adversary_game(lsvi_explorer(), lsvi_planner(), 5, -1, 1, seed=0)
    with pytest.raises(InvalidParameterError):
        run_adversary_game(lsvi_explorer(), lsvi_planner(), 5, 1, 0, seed=0)
