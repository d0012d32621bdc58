"""Command line interface.

Exit codes: 0 success, 2 configuration or input error, 3 runtime error
(whatever results were produced are still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import io
from .errors import FormatError, InvalidParameterError, RewardFreeError
from .explorer import ExplorationConfig, run_exploration
from .harness import (
    HARDNESS_HEADER,
    PAPER_DEFAULT,
    VALIDATION_HEADER,
    ConfigError,
    ExperimentConfig,
    make_instance,
    run_generative,
    run_hardness,
    run_sweep,
    validate_instance,
)
from .mdp import LinearMdpSpec, make_rng
from .oracle import solve_exact, suboptimality
from .planner import plan

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("rewardfree")


def _beta(text: str):
    if text == PAPER_DEFAULT:
        return text
    try:
        value = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected a number or {PAPER_DEFAULT!r}") from exc
    return value


def _common(p: argparse.ArgumentParser, *, seed_required: bool) -> None:
    p.add_argument("--out", required=True, help="output directory (created if missing)")
    p.add_argument("--seed", type=int, required=seed_required, default=None)
    p.add_argument("--config", type=Path, help="JSON file whose keys are ExperimentConfig fields")


def _algo(p: argparse.ArgumentParser) -> None:
    p.add_argument("--beta", type=_beta, help=f"bonus scale, or {PAPER_DEFAULT!r}")
    p.add_argument("--c-beta", dest="c_beta", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)


def _sizes(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=("anchor", "tabular", "hard"))
    p.add_argument("--d", type=int)
    p.add_argument("--H", type=int)
    p.add_argument("--n-states", dest="n_states", type=int)
    p.add_argument("--n-actions", dest="n_actions", type=int)
    p.add_argument("--concentration", type=float)
    p.add_argument("--shift", action="store_true", default=None, help="hard instances: add 0.02 to every reward")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rewardfree", description="Reward-free exploration experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-instance", help="generate an instance file")
    _common(p, seed_required=True)
    _sizes(p)

    p = sub.add_parser("explore", help="run reward-free exploration on an instance file")
    _common(p, seed_required=True)
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--K", type=int, nargs=1)
    _algo(p)

    p = sub.add_parser("plan", help="plan from a dataset for a reward set")
    _common(p, seed_required=False)
    p.add_argument("--instance", type=Path, required=True)
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--rewards", type=Path, help="reward CSV; defaults to the instance's own rewards")
    _algo(p)

    p = sub.add_parser("sweep", help="suboptimality against K over seeds and reward sets")
    _common(p, seed_required=True)
    _sizes(p)
    p.add_argument("--K", type=int, nargs="+")
    p.add_argument("--trials", type=int)
    p.add_argument("--reward-sets", dest="reward_sets", type=int)
    p.add_argument("--workers", type=int)
    _algo(p)

    p = sub.add_parser("hardness", help="adversary game on planted tree instances")
    _common(p, seed_required=True)
    p.add_argument("--H", type=int)
    p.add_argument("--budget", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--explorer", choices=("lsvi", "sweep"))
    p.add_argument("--shift", action="store_true", default=None)
    _algo(p)

    p = sub.add_parser("generative", help="simulator-based exploration and exact planning")
    _common(p, seed_required=True)
    p.add_argument("--H", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--shift", action="store_true", default=None)

    p = sub.add_parser("validate", help="check every invariant of an instance file")
    _common(p, seed_required=False)
    p.add_argument("--instance", type=Path, required=True)
    return parser


_MODE = {
    "gen-instance": "explore-plan",
    "explore": "explore-plan",
    "plan": "validate",  # deterministic: no seed needed
    "sweep": "sweep",
    "hardness": "hardness",
    "generative": "generative",
    "validate": "validate",
}
_NOT_CONFIG = {"command", "verbose", "config", "instance", "dataset", "rewards"}


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    raw = {}
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    for key, value in vars(args).items():
        if key not in _NOT_CONFIG and value is not None:
            raw[key] = value
    raw["mode"] = _MODE[args.command]
    return ExperimentConfig.from_dict(raw).validate()


def _instance_parts(inst):
    """``(view, rewards or None, dynamics)`` for either instance type."""
    if isinstance(inst, LinearMdpSpec):
        return inst.reward_free_view(), (inst.rewards() if inst.reward_vectors is not None else None), inst.dynamics
    return inst.reward_free_view(), inst.rewards, inst.dynamics


def _write_config(cfg: ExperimentConfig, out: Path) -> None:
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def cmd_gen_instance(cfg: ExperimentConfig, args, out: Path) -> int:
    inst = make_instance(cfg, cfg.seed)
    io.save_instance(inst, out / "instance.json")
    _, rewards, _ = _instance_parts(inst)
    if rewards is not None:
        io.save_rewards(rewards, out / "rewards.csv")
    print(f"wrote {out / 'instance.json'} (d={inst.dim}, H={cfg.H if cfg.kind == 'hard' else inst.horizon})")
    return EXIT_OK


def cmd_explore(cfg: ExperimentConfig, args, out: Path) -> int:
    inst = io.load_instance(args.instance)
    view, _, _ = _instance_parts(inst)
    d, H = view.features.dim, view.features.horizon
    K = cfg.K[0] if args.K else ExplorationConfig.paper_default(d, H, epsilon=cfg.epsilon, delta=cfg.delta).K
    econf = ExplorationConfig(
        K=K, beta=cfg.resolve_beta(d, H), H=H, d=d, epsilon=cfg.epsilon, delta=cfg.delta, c_beta=cfg.c_beta
    )
    res = run_exploration(view, econf, make_rng(cfg.seed, 1))
    io.save_dataset(res.dataset, out / "dataset.csv")
    io.save_episode_log(res.v1, out / "episodes.csv")
    print(f"explored {K} episodes with beta={econf.beta:.6g}; wrote dataset.csv and episodes.csv")
    return EXIT_OK


def cmd_plan(cfg: ExperimentConfig, args, out: Path) -> int:
    inst = io.load_instance(args.instance)
    view, rewards, dyn = _instance_parts(inst)
    if args.rewards is not None:
        rewards = io.load_rewards(args.rewards, view.features.n_states, view.features.n_actions)
    if rewards is None:
        raise ConfigError("the instance has no rewards; pass --rewards")
    data = io.load_dataset(args.dataset)
    d, H = view.features.dim, view.features.horizon
    beta = cfg.resolve_beta(d, H)
    res = plan(data, rewards, beta, view)
    io.save_policy(res.policy, out / "policy.csv")
    row = {"K": data.K, "beta": beta}
    try:
        exact = solve_exact(dyn, rewards)
        gap = suboptimality(dyn, rewards, res.policy)
        row.update(suboptimality=gap, V1_star=exact.value, V1_pi=exact.value - gap)
    except RewardFreeError as exc:
        # rewards only defined where the planner needed them: no oracle value
        log.warning("oracle evaluation skipped: %s", exc)
    io.write_rows(out / "plan.csv", list(row), [row])
    print(", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in row.items()))
    return EXIT_OK


def cmd_sweep(cfg: ExperimentConfig, args, out: Path) -> int:
    rows = run_sweep(replace(cfg, out=str(out)))
    failed = [r for r in rows if r["error"]]
    print(f"wrote {len(rows)} rows to {out / 'sweep.csv'} ({len(failed)} with errors)")
    return EXIT_RUNTIME if failed else EXIT_OK


def cmd_hardness(cfg: ExperimentConfig, args, out: Path) -> int:
    report = run_hardness(replace(cfg, out=str(out)))
    print(", ".join(f"{k}={report.row()[k]}" for k in HARDNESS_HEADER))
    return EXIT_OK


def cmd_generative(cfg: ExperimentConfig, args, out: Path) -> int:
    rows = run_generative(replace(cfg, out=str(out)))
    worst = max(r["suboptimality"] for r in rows)
    print(f"{len(rows)} instances, queries <= {max(r['queries'] for r in rows)}, worst suboptimality {worst:.3g}")
    return EXIT_OK


def cmd_validate(cfg: ExperimentConfig, args, out: Path) -> int:
    report = validate_instance(args.instance)
    io.write_rows(out / "validation.csv", VALIDATION_HEADER, report.rows())
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name} residual={c.residual:.3g} {c.detail}".rstrip())
    return EXIT_OK


COMMANDS = {
    "gen-instance": cmd_gen_instance,
    "explore": cmd_explore,
    "plan": cmd_plan,
    "sweep": cmd_sweep,
    "hardness": cmd_hardness,
    "generative": cmd_generative,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except (InvalidParameterError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    _write_config(cfg, out)
    try:
        return COMMANDS[args.command](cfg, args, out)
    except FormatError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RewardFreeError, OSError) as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
