"""File formats.

Instance files are JSON with one top-level field per line and one line per
level, so parse errors point at a useful line. Floats are written with
Python's shortest round-trip repr, which is lossless for float64.

Hard instances are stored by their generating parameters; their tree-level
features are too large to be worth serialising and are rebuilt on load.

CSV layouts (header row included, levels 0-based)::

    dataset    episode,h,state,action,next_state
    episodes   episode,V1_estimate
    rewards    h,state,action,reward
    policy     h,state,action
    probe      h,state,action,next_state
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import FormatError
from .mdp import ExplorationDataset, FeatureMap, LinearMdpSpec, PolicyTable, RewardFunctionSet

FORMAT = "rewardfree-instance"
VERSION = 1


def _dump(value) -> str:
    if isinstance(value, np.ndarray):
        value = value.tolist()
    return json.dumps(value, allow_nan=False)


def instance_to_text(instance) -> str:
    from .hardness import HardInstance

    if isinstance(instance, HardInstance):
        header = {
            "format": FORMAT,
            "version": VERSION,
            "kind": "hard",
            "horizon": instance.H,
            "feature_seed": instance.feature_seed,
            "planted": [instance.planted_state, instance.planted_action, instance.last_action],
            "shift": instance.shift,
            "dim": instance.dim,
        }
        lines = [f"{_dump(k)}: {_dump(v)}" for k, v in header.items()]
        return "{\n" + ",\n".join(lines) + "\n}\n"
    spec: LinearMdpSpec = instance
    header = {
        "format": FORMAT,
        "version": VERSION,
        "kind": "linear-mdp",
        "horizon": spec.horizon,
        "dim": spec.dim,
        "n_actions": spec.n_actions,
        "n_states": list(spec.n_states),
        "initial": spec.initial,
    }
    lines = [f"{_dump(k)}: {_dump(v)}" for k, v in header.items()]
    levels = []
    for h in range(spec.horizon):
        entry = {
            "level": h,
            "features": spec.features.tables[h],
            "core": spec.cores[h],
            "reward_vector": None if spec.reward_vectors is None else spec.reward_vectors[h],
        }
        levels.append("{" + ", ".join(f"{_dump(k)}: {_dump(v)}" for k, v in entry.items()) + "}")
    lines.append('"levels": [\n' + ",\n".join(levels) + "\n]")
    return "{\n" + ",\n".join(lines) + "\n}\n"


def save_instance(instance, path) -> None:
    Path(path).write_text(instance_to_text(instance))


def _line_of(text: str, needle: str, start: int = 0) -> int | None:
    pos = text.find(needle, start)
    return None if pos < 0 else text.count("\n", 0, pos) + 1


def load_instance(path, *, validate: bool = True):
    """Load a linear MDP or a hard instance.

    With ``validate=False`` invariants are not enforced, which is what
    :func:`rewardfree.harness.validate_instance` needs to report on them.
    """
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", exc.lineno) from exc
    if not isinstance(obj, dict) or obj.get("format") != FORMAT:
        raise FormatError(f"not a {FORMAT} file", 1)
    if obj.get("version") != VERSION:
        raise FormatError(f"unsupported version {obj.get('version')!r}", _line_of(text, '"version"'))
    kind = obj.get("kind")
    try:
        if kind == "hard":
            from .hardness import build_hard_instance

            label, a, last = obj["planted"]
            return build_hard_instance(
                int(obj["horizon"]),
                0,
                feature_seed=int(obj.get("feature_seed", 0)),
                shift=bool(obj.get("shift", False)),
                planted=(int(label), int(a), int(last)),
            )
        if kind != "linear-mdp":
            raise FormatError(f"unknown instance kind {kind!r}", _line_of(text, '"kind"'))
        levels = obj["levels"]
    except KeyError as exc:
        raise FormatError(f"missing field {exc.args[0]!r}", 1) from exc
    tables, cores, etas = [], [], []
    for h, lv in enumerate(levels):
        line = _line_of(text, f'{{"level": {h},')
        try:
            tables.append(np.array(lv["features"], dtype=float))
            cores.append(np.array(lv["core"], dtype=float))
            etas.append(None if lv.get("reward_vector") is None else np.array(lv["reward_vector"], dtype=float))
        except (KeyError, ValueError, TypeError) as exc:
            raise FormatError(f"level {h}: {exc}", line) from exc
    reward_vectors = None if any(e is None for e in etas) else etas
    try:
        features = FeatureMap(tables, validate=validate)
        return LinearMdpSpec(features, cores, obj["initial"], reward_vectors, validate=validate)
    except KeyError as exc:
        raise FormatError(f"missing field {exc.args[0]!r}", 1) from exc


# ---------------------------------------------------------------------- CSV


def _rows(path, header: list[str]):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first != header:
            raise FormatError(f"expected header {','.join(header)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise FormatError(f"expected {len(header)} fields, got {len(row)}", lineno)
            yield lineno, row


def _write(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


DATASET_HEADER = ["episode", "h", "state", "action", "next_state"]


def save_dataset(dataset: ExplorationDataset, path) -> None:
    _write(
        path,
        DATASET_HEADER,
        (
            (k, h, int(dataset.states[k, h]), int(dataset.actions[k, h]), int(dataset.states[k, h + 1]))
            for k in range(dataset.K)
            for h in range(dataset.H)
        ),
    )


def load_dataset(path) -> ExplorationDataset:
    episodes: dict[int, dict[int, tuple[int, int, int, int]]] = {}
    for lineno, row in _rows(path, DATASET_HEADER):
        try:
            k, h, s, a, t = map(int, row)
        except ValueError as exc:
            raise FormatError(str(exc), lineno) from exc
        episodes.setdefault(k, {})[h] = (s, a, t, lineno)
    if not episodes:
        raise FormatError("dataset is empty; its horizon is unknown", 1)
    H = max(len(v) for v in episodes.values())
    states, actions = [], []
    for k in sorted(episodes):
        steps = episodes[k]
        if sorted(steps) != list(range(H)):
            raise FormatError(f"episode {k} does not have levels 0..{H - 1}", min(x[3] for x in steps.values()))
        st = [steps[0][0]]
        ac = []
        for h in range(H):
            s, a, t, lineno = steps[h]
            if s != st[-1]:
                raise FormatError(f"episode {k}: state at level {h} does not follow level {h - 1}", lineno)
            ac.append(a)
            st.append(t)
        states.append(st)
        actions.append(ac)
    return ExplorationDataset(states, actions)


def save_episode_log(v1, path) -> None:
    _write(path, ["episode", "V1_estimate"], ((k, repr(float(v))) for k, v in enumerate(v1)))


REWARD_HEADER = ["h", "state", "action", "reward"]


def save_rewards(rewards: RewardFunctionSet, path) -> None:
    _write(
        path,
        REWARD_HEADER,
        (
            (h, s, a, repr(float(t[s, a])))
            for h, t in enumerate(rewards.tables)
            for s in range(t.shape[0])
            for a in range(t.shape[1])
            if not np.isnan(t[s, a])
        ),
    )


def load_rewards(path, n_states, n_actions: int) -> RewardFunctionSet:
    """Rows not present in the file are left undefined (NaN)."""
    tables = [np.full((n, n_actions), np.nan) for n in n_states]
    for lineno, row in _rows(path, REWARD_HEADER):
        try:
            h, s, a = map(int, row[:3])
            tables[h][s, a] = float(row[3])
        except (ValueError, IndexError) as exc:
            raise FormatError(str(exc), lineno) from exc
    return RewardFunctionSet(tuple(tables))


POLICY_HEADER = ["h", "state", "action"]


def save_policy(policy: PolicyTable, path) -> None:
    _write(path, POLICY_HEADER, ((h, s, int(a)) for h, acts in enumerate(policy.actions) for s, a in enumerate(acts)))


def load_policy(path, n_states) -> PolicyTable:
    acts = [np.full(n, -1) for n in n_states]
    for lineno, row in _rows(path, POLICY_HEADER):
        try:
            h, s, a = map(int, row)
            acts[h][s] = a
        except (ValueError, IndexError) as exc:
            raise FormatError(str(exc), lineno) from exc
    return PolicyTable(tuple(acts))


PROBE_HEADER = ["h", "state", "action", "next_state"]


def save_probe(probe, path) -> None:
    _write(path, PROBE_HEADER, probe.rows())


def load_probe(path, horizon: int):
    from .generative import BasisProbe, LevelProbe

    pairs = [[] for _ in range(horizon)]
    succ = [[] for _ in range(horizon)]
    for lineno, row in _rows(path, PROBE_HEADER):
        try:
            h, s, a, t = map(int, row)
            pairs[h].append((s, a))
            succ[h].append(t)
        except (ValueError, IndexError) as exc:
            raise FormatError(str(exc), lineno) from exc
    return BasisProbe(tuple(LevelProbe(tuple(p), tuple(t)) for p, t in zip(pairs, succ)))


def write_rows(path, header: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
