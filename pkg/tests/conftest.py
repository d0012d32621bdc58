import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rewardfree.mdp import (
    Dynamics,
    RewardFunctionSet,
    TabularMdp,
    make_random_anchor_instance,
    make_tabular_embedding,
)

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def chain(H, n_actions=2, rewarded_action=1):
    """One state per level, deterministic; reward 1 for ``rewarded_action``."""
    trans = tuple(np.ones((1, n_actions, 1)) for _ in range(H))
    r = np.zeros((1, n_actions))
    r[0, rewarded_action] = 1.0
    return TabularMdp(Dynamics(trans, np.ones(1)), RewardFunctionSet(tuple(r for _ in range(H))))


@pytest.fixture
def anchor():
    return make_random_anchor_instance(6, 4, 10, 3, seed=11)


@pytest.fixture
def chain_spec():
    return make_tabular_embedding(chain(2))


# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
