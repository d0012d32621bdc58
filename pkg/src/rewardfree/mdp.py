"""Finite episodic MDPs with linear structure.

Conventions used throughout the package:

* Levels are 0-based: ``h = 0 .. H-1``. Level ``h`` here is step ``h + 1``
  in the usual 1-based notation.
* Every level has its own finite state set ``0 .. n_states[h] - 1``. There
  are ``H + 1`` state sets; the last one holds the successors of the final
  step and is never acted in.
* Actions are ``0 .. n_actions - 1`` at every level.
* Ties in a greedy argmax go to the lowest action id.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    IncompletePolicyError,
    InvalidModelError,
    InvalidParameterError,
    MissingRewardError,
    NormViolationError,
)

TOL = 1e-9
# Above this ambient dimension the algorithms work in per-level coordinates
# of the span of that level's features (see FeatureMap.design).
COMPACT_ABOVE = 512


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator keyed by ``seed`` and an optional stream path."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, stream)])))


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    residual: float
    detail: str = ""


class FeatureMap:
    """Per-level tables ``phi[h][s, a] -> R^d``."""

    def __init__(self, tables: Sequence[np.ndarray], *, validate: bool = True):
        tabs = []
        for t in tables:
            t = np.asarray(t, dtype=float)
            if t.ndim != 3:
                raise InvalidModelError(f"feature table must be (states, actions, d), got {t.shape}")
            tabs.append(_readonly(t))
        if not tabs:
            raise InvalidModelError("at least one level is required")
        if len({t.shape[1] for t in tabs}) != 1 or len({t.shape[2] for t in tabs}) != 1:
            raise InvalidModelError("all levels must share the action count and dimension")
        self.tables = tuple(tabs)
        self._design: dict[int, np.ndarray] = {}
        if validate:
            worst = self.max_norm()
            if worst > 1.0 + TOL:
                raise NormViolationError(f"feature norm {worst!r} exceeds 1")

    @property
    def dim(self) -> int:
        return self.tables[0].shape[2]

    @property
    def horizon(self) -> int:
        return len(self.tables)

    @property
    def n_actions(self) -> int:
        return self.tables[0].shape[1]

    @property
    def n_states(self) -> tuple[int, ...]:
        return tuple(t.shape[0] for t in self.tables)

    def phi(self, h: int, s: int, a: int) -> np.ndarray:
        return self.tables[h][s, a]

    def rows(self, h: int) -> np.ndarray:
        """Level ``h`` features as ``(n_states * n_actions, d)``; row ``s * A + a``."""
        t = self.tables[h]
        return t.reshape(-1, t.shape[2])

    def max_norm(self) -> float:
        return max(float(np.sqrt(np.einsum("ijk,ijk->ij", t, t).max())) for t in self.tables)

    def design(self, h: int) -> np.ndarray:
        """Coordinates the algorithms regress on, shaped ``(n_states, n_actions, r)``.

        For ``d <= COMPACT_ABOVE`` this is the raw table. For larger ``d`` it
        is an isometric image of the level's features inside their own span
        (``r <= n_states * n_actions``), obtained from the level Gram matrix.
        Every quantity the algorithms need (``phi^T Lambda^-1 phi`` with
        ``Lambda = I + sum phi phi^T`` and the ridge predictions) depends only
        on inner products inside that span, so results are unchanged.
        """
        if h in self._design:
            return self._design[h]
        t = self.tables[h]
        n_pairs = t.shape[0] * t.shape[1]
        if self.dim <= COMPACT_ABOVE or n_pairs >= self.dim:
            out = t
        else:
            rows = self.rows(h)
            gram = rows @ rows.T
            w, v = np.linalg.eigh(0.5 * (gram + gram.T))
            keep = w > 1e-12 * max(float(w.max()), 1.0)
            z = v[:, keep] * np.sqrt(w[keep])
            if z.shape[1] == 0:
                z = np.zeros((n_pairs, 1))
            out = _readonly(z.reshape(t.shape[0], t.shape[1], -1))
        self._design[h] = out
        return out


@dataclass(frozen=True, eq=False)
class Dynamics:
    """Explicit transition tables ``P[h][s, a, s']`` and initial distribution."""

    transitions: tuple[np.ndarray, ...]
    initial: np.ndarray

    def __post_init__(self):
        trans = tuple(_readonly(np.asarray(p, dtype=float)) for p in self.transitions)
        object.__setattr__(self, "transitions", trans)
        object.__setattr__(self, "initial", _readonly(np.asarray(self.initial, dtype=float)))
        if not trans:
            raise InvalidModelError("horizon must be at least 1")
        if trans[0].shape[0] != self.initial.shape[0]:
            raise InvalidModelError("initial distribution does not match the first state set")
        for h in range(len(trans) - 1):
            if trans[h].shape[2] != trans[h + 1].shape[0]:
                raise InvalidModelError(f"level {h} successors do not match level {h + 1} states")
        if len({p.shape[1] for p in trans}) != 1:
            raise InvalidModelError("all levels must share the action count")

    @property
    def horizon(self) -> int:
        return len(self.transitions)

    @property
    def n_actions(self) -> int:
        return self.transitions[0].shape[1]

    @property
    def n_states(self) -> tuple[int, ...]:
        return tuple(p.shape[0] for p in self.transitions) + (self.transitions[-1].shape[2],)

    def check_stochastic(self) -> list[CheckResult]:
        neg = max(float(-min(p.min(), 0.0)) for p in self.transitions) + 0.0
        norm = max(float(np.abs(p.sum(axis=2) - 1.0).max()) for p in self.transitions)
        init_res = max(abs(float(self.initial.sum()) - 1.0), float(-min(self.initial.min(), 0.0)))
        return [
            CheckResult("transition-nonnegative", neg <= TOL, neg),
            CheckResult("transition-normalised", norm <= TOL, norm),
            CheckResult("initial-distribution", init_res <= TOL, init_res),
        ]

    def is_deterministic(self) -> bool:
        return all(np.all(np.isclose(p.max(axis=2), 1.0, atol=1e-12)) for p in self.transitions)

    def sample(self, policy: "PolicyTable", n: int, rng: np.random.Generator):
        """Roll out ``n`` episodes; returns ``(states (n, H+1), actions (n, H))``."""
        H = self.horizon
        states = np.empty((n, H + 1), dtype=np.int64)
        actions = np.empty((n, H), dtype=np.int64)
        states[:, 0] = _draw(np.broadcast_to(self.initial, (n, self.initial.shape[0])), rng.random(n))
        for h in range(H):
            s = states[:, h]
            a = policy.actions[h][s]
            if np.any(a < 0):
                bad = int(s[np.argmax(a < 0)])
                raise IncompletePolicyError(f"policy undefined at level {h}, state {bad}")
            actions[:, h] = a
            states[:, h + 1] = _draw(self.transitions[h][s, a], rng.random(n))
        return states, actions


def _draw(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    probs = np.clip(probs, 0.0, None)
    cum = np.cumsum(probs, axis=1)
    idx = (cum <= (u * cum[:, -1])[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def as_dynamics(model) -> Dynamics:
    if isinstance(model, Dynamics):
        return model
    dyn = getattr(model, "dynamics", None)
    if isinstance(dyn, Dynamics):
        return dyn
    raise TypeError(f"cannot extract transition tables from {type(model).__name__}")


@dataclass(frozen=True, eq=False)
class RewardFunctionSet:
    """Deterministic rewards ``r[h][s, a]``; NaN marks an undefined entry."""

    tables: tuple[np.ndarray, ...]
    linear: tuple[np.ndarray, ...] | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "tables", tuple(_readonly(np.array(t, dtype=float)) for t in self.tables)
        )
        if self.linear is not None:
            object.__setattr__(
                self, "linear", tuple(_readonly(np.array(e, dtype=float)) for e in self.linear)
            )

    @classmethod
    def from_linear(cls, features: FeatureMap, etas: Sequence[np.ndarray]) -> "RewardFunctionSet":
        etas = [np.asarray(e, dtype=float) for e in etas]
        return cls(tuple(t @ e for t, e in zip(features.tables, etas)), tuple(etas))

    @property
    def horizon(self) -> int:
        return len(self.tables)

    def level(self, h: int) -> np.ndarray:
        """Level ``h`` table, raising if any entry is undefined."""
        t = self.tables[h]
        if np.isnan(t).any():
            s, a = np.argwhere(np.isnan(t))[0]
            raise MissingRewardError(f"reward undefined at level {h}, state {s}, action {a}")
        return t

    def check_linear(self, features: FeatureMap) -> CheckResult:
        if self.linear is None:
            return CheckResult("reward-linear-consistency", True, 0.0, "no linear representation")
        res = max(
            float(np.abs(t - f @ e).max()) for t, f, e in zip(self.tables, features.tables, self.linear)
        )
        return CheckResult("reward-linear-consistency", res <= TOL, res)

    def shifted(self, c: float) -> "RewardFunctionSet":
        return RewardFunctionSet(tuple(t + c for t in self.tables))


@dataclass(frozen=True, eq=False)
class PolicyTable:
    """``actions[h][s]`` is the action at level ``h``; -1 means undefined."""

    actions: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "actions", tuple(_readonly(np.array(a, dtype=np.int64)) for a in self.actions)
        )

    @classmethod
    def greedy(cls, q_tables: Sequence[np.ndarray]) -> "PolicyTable":
        return cls(tuple(np.argmax(q, axis=1) for q in q_tables))

    @classmethod
    def constant(cls, n_states: Sequence[int], action: int = 0) -> "PolicyTable":
        return cls(tuple(np.full(n, action) for n in n_states))

    def __call__(self, h: int, s: int) -> int:
        a = int(self.actions[h][s])
        if a < 0:
            raise IncompletePolicyError(f"policy undefined at level {h}, state {s}")
        return a

    def is_total(self) -> bool:
        return all(bool(np.all(a >= 0)) for a in self.actions)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PolicyTable) or len(self.actions) != len(other.actions):
            return NotImplemented
        return all(np.array_equal(x, y) for x, y in zip(self.actions, other.actions))

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class Trajectory:
    states: tuple[int, ...]  # length H + 1
    actions: tuple[int, ...]  # length H

    def __post_init__(self):
        if len(self.states) != len(self.actions) + 1:
            raise InvalidModelError("a trajectory needs one more state than actions")

    def __len__(self) -> int:
        return len(self.actions)

    def steps(self) -> Iterator[tuple[int, int, int, int]]:
        """Yield ``(h, s_h, a_h, s_{h+1})``."""
        for h, a in enumerate(self.actions):
            yield h, self.states[h], a, self.states[h + 1]


class ExplorationDataset:
    """Trajectories collected without rewards, successors included."""

    def __init__(self, states, actions):
        try:
            states = np.array(states, dtype=np.int64)
            actions = np.array(actions, dtype=np.int64)
        except ValueError as exc:
            raise InvalidModelError(f"ragged trajectories: {exc}") from exc
        if states.ndim != 2 or actions.ndim != 2:
            if states.size or actions.size:
                raise InvalidModelError("states and actions must be (K, H+1) and (K, H) arrays")
            states, actions = states.reshape(0, 1), actions.reshape(0, 0)
        if states.shape[0] != actions.shape[0]:
            raise InvalidModelError("state and action arrays disagree on episode count")
        if states.shape[0] and states.shape[1] != actions.shape[1] + 1:
            raise InvalidModelError("every trajectory must have length H")
        self.states = _readonly(states)
        self.actions = _readonly(actions)

    @classmethod
    def empty(cls, H: int) -> "ExplorationDataset":
        return cls(np.zeros((0, H + 1)), np.zeros((0, H)))

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory], H: int | None = None):
        if not trajectories:
            if H is None:
                raise InvalidModelError("horizon needed for an empty dataset")
            return cls.empty(H)
        return cls([t.states for t in trajectories], [t.actions for t in trajectories])

    @property
    def K(self) -> int:
        return self.states.shape[0]

    @property
    def H(self) -> int:
        return self.actions.shape[1]

    @property
    def trajectories(self) -> list[Trajectory]:
        return [Trajectory(tuple(map(int, s)), tuple(map(int, a))) for s, a in zip(self.states, self.actions)]

    def prefix(self, k: int) -> "ExplorationDataset":
        return ExplorationDataset(self.states[:k], self.actions[:k])

    def __len__(self) -> int:
        return self.K

    def __eq__(self, other) -> bool:
        if not isinstance(other, ExplorationDataset):
            return NotImplemented
        return np.array_equal(self.states, other.states) and np.array_equal(self.actions, other.actions)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True, eq=False)
class TabularMdp:
    dynamics: Dynamics
    rewards: RewardFunctionSet

    def __post_init__(self):
        failed = [c for c in self.dynamics.check_stochastic() if not c.passed]
        if failed:
            raise InvalidModelError(
                "; ".join(f"{c.name} residual {c.residual:.3g}" for c in failed)
            )
        for h, r in enumerate(self.rewards.tables):
            if r.shape != self.dynamics.transitions[h].shape[:2]:
                raise InvalidModelError(f"reward table at level {h} has shape {r.shape}")
            if np.nanmin(r) < -TOL or np.nanmax(r) > 1 + TOL:
                raise InvalidModelError(f"rewards at level {h} leave [0, 1]")


class LinearMdpSpec:
    """Linear MDP: ``P_h(.|s,a) = M_h phi(s,a)`` and ``r_h(s,a) = <phi(s,a), eta_h>``.

    ``cores[h]`` has shape ``(n_states[h+1], d)``; row ``s'`` is ``mu_h(s')``.
    """

    def __init__(
        self,
        features: FeatureMap,
        cores: Sequence[np.ndarray],
        initial,
        reward_vectors: Sequence[np.ndarray] | None = None,
        *,
        validate: bool = True,
    ):
        self.features = features
        self.cores = tuple(_readonly(np.array(m, dtype=float)) for m in cores)
        self.initial = _readonly(np.array(initial, dtype=float))
        self.reward_vectors = (
            None if reward_vectors is None
            else tuple(_readonly(np.array(e, dtype=float)) for e in reward_vectors)
        )
        H = features.horizon
        if len(self.cores) != H:
            raise InvalidModelError(f"expected {H} transition cores, got {len(self.cores)}")
        for h, m in enumerate(self.cores):
            if m.ndim != 2 or m.shape[1] != features.dim:
                raise InvalidModelError(f"core {h} must have {features.dim} columns, got {m.shape}")
            if h + 1 < H and m.shape[0] != features.n_states[h + 1]:
                raise InvalidModelError(f"core {h} rows do not match level {h + 1} states")
        if self.reward_vectors is not None and len(self.reward_vectors) != H:
            raise InvalidModelError("one reward vector per level is required")
        self._dynamics: Dynamics | None = None
        if validate:
            report = self.validate()
            failed = [c for c in report if not c.passed and not c.name.startswith("measure-norm")]
            if failed:
                raise InvalidModelError(
                    "; ".join(f"{c.name} residual {c.residual:.3g}" for c in failed)
                )
            for c in report:
                if c.name.startswith("measure-norm") and not c.passed:
                    warnings.warn(f"{c.name}: {c.detail}", stacklevel=2)

    @property
    def horizon(self) -> int:
        return self.features.horizon

    @property
    def dim(self) -> int:
        return self.features.dim

    @property
    def n_actions(self) -> int:
        return self.features.n_actions

    @property
    def n_states(self) -> tuple[int, ...]:
        return self.features.n_states + (self.cores[-1].shape[0],)

    @property
    def dynamics(self) -> Dynamics:
        if self._dynamics is None:
            trans = tuple(
                np.einsum("sad,td->sat", t, m) for t, m in zip(self.features.tables, self.cores)
            )
            self._dynamics = Dynamics(trans, self.initial)
        return self._dynamics

    def rewards(self) -> RewardFunctionSet:
        if self.reward_vectors is None:
            raise MissingRewardError("this instance carries no reward vectors")
        return RewardFunctionSet.from_linear(self.features, self.reward_vectors)

    def reward_free_view(self) -> "RewardFreeEnv":
        return RewardFreeEnv(self.features, self.dynamics)

    def to_tabular(self) -> TabularMdp:
        return TabularMdp(self.dynamics, self.rewards())

    def validate(self) -> list[CheckResult]:
        d = self.dim
        norm_res = self.features.max_norm() - 1.0
        out = [CheckResult("feature-norm", norm_res <= TOL, max(norm_res, 0.0))]
        out += self.dynamics.check_stochastic()
        if self.reward_vectors is not None:
            lo = hi = 0.0
            eta_res = 0.0
            for t, e in zip(self.features.tables, self.reward_vectors):
                r = t @ e
                lo = max(lo, float(-r.min()))
                hi = max(hi, float(r.max()) - 1.0)
                eta_res = max(eta_res, float(np.linalg.norm(e)) - np.sqrt(d))
            out.append(CheckResult("reward-range", max(lo, hi) <= TOL, max(lo, hi, 0.0)))
            out.append(CheckResult("reward-vector-norm", eta_res <= TOL, max(eta_res, 0.0)))
        mu_res = max(float(np.linalg.norm(m.sum(axis=0))) - np.sqrt(d) for m in self.cores)
        out.append(
            CheckResult(
                "measure-norm (warning only)", mu_res <= TOL, max(mu_res, 0.0),
                "||sum_s' mu_h(s')||_2 exceeds sqrt(d)" if mu_res > TOL else "",
            )
        )
        return out


@dataclass(frozen=True, eq=False)
class RewardFreeEnv:
    """What an explorer may touch: features, state sets and a way to roll out.

    Rewards are not reachable from here.
    """

    features: FeatureMap
    dynamics: Dynamics = field(repr=False)

    @property
    def horizon(self) -> int:
        return self.dynamics.horizon

    @property
    def n_states(self) -> tuple[int, ...]:
        return self.dynamics.n_states

    def simulate(self, policy: PolicyTable, rng: np.random.Generator) -> Trajectory:
        states, actions = self.dynamics.sample(policy, 1, rng)
        return Trajectory(tuple(map(int, states[0])), tuple(map(int, actions[0])))


def simulate_episode(model, policy: PolicyTable, rng: np.random.Generator) -> Trajectory:
    """One episode under ``policy``; rewards are never produced."""
    states, actions = as_dynamics(model).sample(policy, 1, rng)
    return Trajectory(tuple(map(int, states[0])), tuple(map(int, actions[0])))


def simulate_episodes(model, policy: PolicyTable, n: int, rng: np.random.Generator):
    return as_dynamics(model).sample(policy, n, rng)


# ---------------------------------------------------------------- generators


def _as_level_sizes(n_states, H: int) -> list[int]:
    if np.isscalar(n_states):
        return [int(n_states)] * (H + 1)
    sizes = [int(x) for x in n_states]
    if len(sizes) == H:
        sizes.append(1)
    if len(sizes) != H + 1:
        raise InvalidParameterError(f"need {H + 1} state-set sizes, got {len(sizes)}")
    return sizes


def make_tabular_embedding(tab: TabularMdp) -> LinearMdpSpec:
    """One-hot embedding ``phi_h(s, a) = e_{s * A + a}`` with ``d = max_h |S_h| |A|``."""
    dyn = tab.dynamics
    A = dyn.n_actions
    d = max(n * A for n in dyn.n_states[:-1])
    tables, cores, etas = [], [], []
    for h, p in enumerate(dyn.transitions):
        n = p.shape[0]
        t = np.zeros((n, A, d))
        t.reshape(n * A, d)[np.arange(n * A), np.arange(n * A)] = 1.0
        m = np.zeros((p.shape[2], d))
        m[:, : n * A] = p.reshape(n * A, -1).T
        e = np.zeros(d)
        e[: n * A] = tab.rewards.tables[h].reshape(-1)
        tables.append(t)
        cores.append(m)
        etas.append(e)
    return LinearMdpSpec(FeatureMap(tables), cores, dyn.initial, etas)


def random_tabular_mdp(
    n_states, n_actions: int, H: int, seed: int, *, deterministic: bool = False
) -> TabularMdp:
    """Random tabular MDP with rewards in [0, 1]."""
    rng = make_rng(seed)
    sizes = _as_level_sizes(n_states, H)
    trans, rewards = [], []
    for h in range(H):
        n, m = sizes[h], sizes[h + 1]
        if deterministic:
            p = np.zeros((n, n_actions, m))
            nxt = rng.integers(0, m, size=(n, n_actions))
            np.put_along_axis(p, nxt[..., None], 1.0, axis=2)
        else:
            p = rng.dirichlet(np.ones(m), size=(n, n_actions))
        trans.append(p)
        rewards.append(rng.random((n, n_actions)))
    initial = rng.dirichlet(np.ones(sizes[0]))
    return TabularMdp(Dynamics(tuple(trans), initial), RewardFunctionSet(tuple(rewards)))


def make_random_anchor_instance(
    d: int, H: int, n_states: int, n_actions: int, seed: int, *, concentration: float = 0.5
) -> LinearMdpSpec:
    """Synthetic linear MDP built from ``d`` anchor distributions per level.

    Each column of ``M_h`` is a random distribution over the next state set,
    and each ``phi(s, a)`` is a Dirichlet point in the simplex over anchors, so
    ``M_h phi`` is automatically a distribution and ``||phi||_2 <= 1``.
    ``eta_h`` is uniform on ``[0, 1]^d``, which keeps rewards in ``[0, 1]``.
    """
    if min(d, H, n_states, n_actions) < 1:
        raise InvalidParameterError("d, H, n_states and n_actions must be positive")
    if d > n_states * n_actions:
        raise InvalidParameterError(f"d={d} exceeds n_states * n_actions = {n_states * n_actions}")
    if concentration <= 0:
        raise InvalidParameterError("concentration must be positive")
    rng = make_rng(seed)
    tables, cores, etas = [], [], []
    for _ in range(H):
        tables.append(rng.dirichlet(np.full(d, concentration), size=(n_states, n_actions)))
        cores.append(rng.dirichlet(np.full(n_states, concentration), size=d).T)
        etas.append(rng.random(d))
    initial = rng.dirichlet(np.ones(n_states))
    return LinearMdpSpec(FeatureMap(tables), cores, initial, etas)


def random_linear_rewards(features: FeatureMap, seed: int, *, power: float = 1.0) -> RewardFunctionSet:
    """Random ``eta_h`` with entries ``U^power`` for ``U ~ Uniform[0, 1]``.

    Rewards stay in ``[0, 1]`` whenever features are nonnegative with
    ``||phi||_1 <= 1`` (simplex and one-hot features both qualify).
    """
    rng = make_rng(seed)
    etas = [rng.random(features.dim) ** power for _ in range(features.horizon)]
    return RewardFunctionSet.from_linear(features, etas)
