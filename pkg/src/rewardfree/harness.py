"""Experiment orchestration: configs, seed fan-out, sweeps and reports.

Every run is a pure function of its config. Cells of a sweep are keyed by
``(K, seed)`` and merged in key order, so the CSV does not depend on the
worker count or on completion order.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import io
from .errors import InvalidParameterError, RewardFreeError
from .explorer import DEFAULT_C_BETA, ExplorationConfig, paper_beta, run_exploration
from .generative import Simulator, generative_explore, generative_plan, generative_q_values
from .hardness import build_hard_instance, lsvi_explorer, lsvi_planner, run_adversary_game, sweep_explorer
from .mdp import (
    CheckResult,
    LinearMdpSpec,
    make_random_anchor_instance,
    make_rng,
    make_tabular_embedding,
    random_linear_rewards,
    random_tabular_mdp,
)
from .oracle import solve_exact, suboptimality
from .planner import plan

log = logging.getLogger(__name__)

MODES = ("explore-plan", "sweep", "hardness", "generative", "validate")
KINDS = ("anchor", "tabular", "hard")
EXPLORERS = ("lsvi", "sweep")
PAPER_DEFAULT = "paper-default"

SWEEP_HEADER = [
    "kind", "d", "H", "K", "seed", "reward_set", "suboptimality", "V1_star", "V1_pi",
    "beta", "c_beta", "n_states", "n_actions", "error",
]
HARDNESS_HEADER = ["H", "budget", "trials", "success_rate", "eventE_rate", "bound"]
GENERATIVE_HEADER = ["H", "seed", "d", "queries", "dH", "suboptimality", "max_q_error"]
VALIDATION_HEADER = ["check", "passed", "residual", "detail"]


class ConfigError(InvalidParameterError):
    """Raised before any work starts when a config is unusable."""


@dataclass(frozen=True)
class ExperimentConfig:
    mode: str = "sweep"
    kind: str = "anchor"
    d: int = 6
    H: int = 4
    n_states: int = 10
    n_actions: int = 3
    K: tuple[int, ...] = (125, 500, 2000)
    beta: float | str = PAPER_DEFAULT
    c_beta: float = DEFAULT_C_BETA
    epsilon: float = 0.1
    delta: float = 0.1
    trials: int = 1
    reward_sets: int = 3
    seed: int | None = None
    out: str | None = None
    budget: int = 0
    explorer: str = "lsvi"
    shift: bool = False
    concentration: float = 0.5
    workers: int = 1

    def validate(self) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.mode in MODES, f"unknown mode {self.mode!r}")
        need(self.kind in KINDS, f"unknown instance kind {self.kind!r}")
        need(self.H >= 1, "H must be >= 1")
        need(self.d >= 1 and self.n_states >= 1 and self.n_actions >= 1, "sizes must be >= 1")
        need(len(self.K) > 0 and min(self.K) >= 0 and max(self.K) >= 1, "K list must be nonempty, >= 0, with a positive entry")
        need(self.trials >= 1, "trials must be >= 1")
        need(self.reward_sets >= 1, "reward_sets must be >= 1")
        need(0 < self.epsilon < 1 and 0 < self.delta < 1, "epsilon and delta must lie in (0, 1)")
        need(self.c_beta > 0, "c_beta must be positive")
        if isinstance(self.beta, str):
            need(self.beta == PAPER_DEFAULT, f"beta must be a number or {PAPER_DEFAULT!r}")
        else:
            need(self.beta > 0, "beta must be positive")
        need(self.budget >= 0, "budget must be >= 0")
        need(self.explorer in EXPLORERS, f"unknown explorer {self.explorer!r}")
        need(self.workers >= 1, "workers must be >= 1")
        if self.mode in ("sweep", "hardness", "generative", "explore-plan"):
            need(self.seed is not None, f"mode {self.mode!r} needs a seed")
        if self.mode == "hardness" or self.kind == "hard":
            need(self.H >= 4, "hard instances need H >= 4")
        if self.mode == "sweep":
            need(self.kind != "hard", "sweeps run on anchor or tabular instances")
        if self.kind == "anchor" and self.mode == "sweep":
            need(self.d <= self.n_states * self.n_actions, "anchor instances need d <= n_states * n_actions")
        return self

    def resolve_beta(self, d: int, H: int) -> float:
        """``c_beta * d H sqrt(log(d H / (delta epsilon)))`` unless a number was given."""
        if self.beta == PAPER_DEFAULT:
            return paper_beta(d, H, self.epsilon, self.delta, self.c_beta)
        return float(self.beta)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(raw) - names
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
        raw = dict(raw)
        if "K" in raw:
            k = raw["K"]
            raw["K"] = (int(k),) if isinstance(k, (int, float)) else tuple(int(x) for x in k)
        if "beta" in raw and raw["beta"] != PAPER_DEFAULT:
            try:
                raw["beta"] = float(raw["beta"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"beta must be a number or {PAPER_DEFAULT!r}") from exc
        return cls(**raw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["K"] = list(self.K)
        return out


# ------------------------------------------------------------------ instances


def make_instance(config: ExperimentConfig, seed: int):
    """Build the configured instance; the instance depends on ``seed`` only."""
    if config.kind == "anchor":
        return make_random_anchor_instance(
            config.d, config.H, config.n_states, config.n_actions, seed, concentration=config.concentration
        )
    if config.kind == "tabular":
        tab = random_tabular_mdp(config.n_states, config.n_actions, config.H, seed)
        return make_tabular_embedding(tab)
    return build_hard_instance(config.H, seed, shift=config.shift)


def reward_set(spec: LinearMdpSpec, seed: int, j: int):
    """Reward set ``j`` of a cell; set 0 is the instance's own when it has one."""
    if j == 0 and spec.reward_vectors is not None:
        return spec.rewards()
    return random_linear_rewards(spec.features, seed * 1000 + j)


# ---------------------------------------------------------------------- sweep


@dataclass(frozen=True)
class _Cell:
    config: ExperimentConfig
    seed: int


def _run_cell(cell: _Cell) -> list[dict]:
    """Explore once with ``max(K)`` episodes and plan on every prefix.

    Exploration is sequential, so the first ``K`` episodes of a longer run are
    exactly a run with ``K`` episodes.
    """
    cfg, seed = cell.config, cell.seed
    ks = sorted(set(cfg.K))
    rows = []
    try:
        spec = make_instance(cfg, seed)
        d, H = spec.dim, spec.horizon
        beta = cfg.resolve_beta(d, H)
    except RewardFreeError as exc:
        return [_error_row(cfg, seed, k, None, None, exc) for k in ks]
    base = {
        "kind": cfg.kind, "d": d, "H": H, "seed": seed, "beta": beta, "c_beta": cfg.c_beta,
        "n_states": cfg.n_states, "n_actions": cfg.n_actions, "error": "",
    }
    try:
        econf = ExplorationConfig(
            K=max(ks), beta=beta, H=H, d=d, epsilon=cfg.epsilon, delta=cfg.delta, c_beta=cfg.c_beta
        )
        data = run_exploration(spec.reward_free_view(), econf, make_rng(seed, 1)).dataset
        rewards = [reward_set(spec, seed, j) for j in range(cfg.reward_sets)]
        exact = [solve_exact(spec.dynamics, r) for r in rewards]
    except RewardFreeError as exc:
        return [_error_row(cfg, seed, k, d, beta, exc) for k in ks]
    view = spec.reward_free_view()
    for k in ks:
        prefix = data.prefix(k)
        for j, (r, ex) in enumerate(zip(rewards, exact)):
            row = dict(base, K=k, reward_set=j)
            try:
                pol = plan(prefix, r, beta, view).policy
                gap = suboptimality(spec.dynamics, r, pol)
                row.update(suboptimality=gap, V1_star=ex.value, V1_pi=ex.value - gap)
            except RewardFreeError as exc:
                row.update(suboptimality="", V1_star="", V1_pi="", error=f"{type(exc).__name__}: {exc}")
            rows.append(row)
    return rows


def _error_row(cfg, seed, k, d, beta, exc) -> dict:
    return {
        "kind": cfg.kind, "d": d if d is not None else cfg.d, "H": cfg.H, "K": k, "seed": seed,
        "reward_set": "", "suboptimality": "", "V1_star": "", "V1_pi": "",
        "beta": beta if beta is not None else "", "c_beta": cfg.c_beta,
        "n_states": cfg.n_states, "n_actions": cfg.n_actions, "error": f"{type(exc).__name__}: {exc}",
    }


def _safe_cell(cell: _Cell) -> list[dict]:
    try:
        return _run_cell(cell)
    except Exception as exc:  # crash isolation: one bad cell never sinks the sweep
        log.exception("cell seed=%s failed", cell.seed)
        return [_error_row(cell.config, cell.seed, k, None, None, exc) for k in sorted(set(cell.config.K))]


def run_sweep(config: ExperimentConfig) -> list[dict]:
    """Rows sorted by ``(K, seed, reward_set)``; written to ``out/sweep.csv`` if set."""
    config = replace(config, mode="sweep").validate()
    cells = [_Cell(config, config.seed + i) for i in range(config.trials)]
    if config.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=min(config.workers, len(cells), os.cpu_count() or 1)) as pool:
            results = list(pool.map(_safe_cell, cells))
    else:
        results = [_safe_cell(c) for c in cells]
    rows = [r for rs in results for r in rs]
    rows.sort(key=lambda r: (r["K"], r["seed"], -1 if r["reward_set"] == "" else r["reward_set"]))
    if config.out:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        io.write_rows(out / "sweep.csv", SWEEP_HEADER, rows)
    return rows


def median_by_k(rows: list[dict]) -> dict[int, float]:
    by: dict[int, list[float]] = {}
    for r in rows:
        if not r["error"]:
            by.setdefault(r["K"], []).append(r["suboptimality"])
    return {k: float(np.median(v)) for k, v in sorted(by.items())}


# ------------------------------------------------------------------- hardness


def run_hardness(config: ExperimentConfig):
    """One adversary game; writes ``out/hardness.csv`` with a single row."""
    config = replace(config, mode="hardness").validate()
    beta = None if config.beta == PAPER_DEFAULT else float(config.beta)
    if config.explorer == "lsvi":
        explorer = lsvi_explorer(beta, epsilon=config.epsilon, delta=config.delta)
    else:
        explorer = sweep_explorer()
    planner = lsvi_planner(beta, epsilon=config.epsilon, delta=config.delta)
    report = run_adversary_game(explorer, planner, config.H, config.budget, config.trials, config.seed, shift=config.shift)
    if config.out:
        out = Path(config.out)
        out.mkdir(parents=True, exist_ok=True)
        io.write_rows(out / "hardness.csv", HARDNESS_HEADER, [report.row()])
    return report


# ----------------------------------------------------------------- generative


def run_generative(config: ExperimentConfig) -> list[dict]:
    """Probe and plan on ``trials`` hard instances (seeds ``seed + i``)."""
    config = replace(config, mode="generative", kind="hard").validate()
    rows = []
    out = Path(config.out) if config.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for i in range(config.trials):
        seed = config.seed + i
        inst = build_hard_instance(config.H, seed, shift=config.shift)
        sim = Simulator(inst.dynamics)
        probe = generative_explore(sim, inst.features)
        q = generative_q_values(probe, inst.rewards, inst.features)
        pol = generative_plan(probe, inst.rewards, inst.features)
        exact = solve_exact(inst.dynamics, inst.rewards)
        err = max(float(np.abs(a - b).max()) for a, b in zip(q, exact.q))
        rows.append({
            "H": config.H, "seed": seed, "d": inst.dim, "queries": sim.queries, "dH": inst.dim * config.H,
            "suboptimality": suboptimality(inst.dynamics, inst.rewards, pol), "max_q_error": err,
        })
        if out and i == 0:
            io.save_probe(probe, out / "probe.csv")
    if out:
        io.write_rows(out / "generative.csv", GENERATIVE_HEADER, rows)
    return rows


# ------------------------------------------------------------------- validate


@dataclass(frozen=True)
class ValidationReport:
    kind: str
    checks: tuple[CheckResult, ...] = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def rows(self) -> list[dict]:
        return [
            {"check": c.name, "passed": c.passed, "residual": float(c.residual), "detail": c.detail}
            for c in self.checks
        ]


def validate_instance(path) -> ValidationReport:
    """Load without enforcing invariants, then report every one of them."""
    inst = io.load_instance(path, validate=False)
    if isinstance(inst, LinearMdpSpec):
        return ValidationReport("linear-mdp", tuple(inst.validate()))
    return ValidationReport("hard", tuple(inst.certificates()))
