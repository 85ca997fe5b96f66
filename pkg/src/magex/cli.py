"""Command-line entry points: ``magex train | eval | plotdata | replay``.

Exit codes: 0 ok, 2 bad config or arguments, 3 training aborted on a
non-finite loss, 4 missing artifact (checkpoint, metrics file, or no data).
Relative output directories resolve against ``$MAGEX_OUTPUT_ROOT`` (default:
the working directory).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .envs import ConfigError, EnvConfig, TrajectoryWriter, reset, step, success_rate
from .envs.config import Task
from .executor import act
from .trainer import (
    METHODS,
    CheckpointError,
    EvalReport,
    TrainConfig,
    TrainingAborted,
    evaluate,
    evaluate_controller,
    evaluate_random,
    hidden_zeros,
    load_checkpoint,
    start_episode,
    train,
)
from .trainer.evaluate import eval_seed

log = logging.getLogger("magex")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_MISSING = 0, 2, 3, 4
OUTPUT_ROOT_ENV = "MAGEX_OUTPUT_ROOT"
RESOLVED_NAME = "config.resolved.yaml"
PLANNERS = ("ma_astar", "random")
REQUIRED = ("name", "method", "env")


class MissingArtifact(FileNotFoundError):
    pass


@dataclass
class ExperimentConfig:
    name: str
    method: str
    env: EnvConfig
    train: TrainConfig = field(default_factory=TrainConfig)
    output_dir: str | None = None  # default: <output root>/<name>
    seeds: list[int] = field(default_factory=lambda: [0])

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method: unknown {self.method!r}; expected one of {list(METHODS)}")
        if not self.seeds or any(int(s) != s for s in self.seeds):
            raise ConfigError("seeds: expected a non-empty list of integers")
        self.seeds = [int(s) for s in self.seeds]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a mapping at the top level")
        missing = [k for k in REQUIRED if k not in d]
        if missing:
            raise ConfigError(f"missing required field: {', '.join(missing)}")
        unknown = set(d) - {"name", "method", "env", "train", "output_dir", "seeds"}
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        if not isinstance(d["env"], dict) or not isinstance(d.get("train", {}), dict):
            raise ConfigError("env and train must be mappings")
        return cls(str(d["name"]), d["method"], EnvConfig.from_dict(d["env"]),
                   TrainConfig.from_dict(d.get("train") or {}), d.get("output_dir"), list(d.get("seeds", [0])))

    def to_dict(self) -> dict:
        return {"name": self.name, "method": self.method, "env": self.env.to_dict(), "train": self.train.to_dict(),
                "output_dir": self.output_dir, "seeds": list(self.seeds)}

    def run_dir(self, root: Path | None = None) -> Path:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, ".")) if root is None else root
        out = Path(self.output_dir) if self.output_dir else Path(self.name)
        return out if out.is_absolute() else root / out


def _key_lines(text: str) -> dict[str, int]:
    """Dotted key path -> 1-based source line, for error messages."""
    out: dict[str, int] = {}

    def walk(node, prefix):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                path = f"{prefix}{k.value}"
                out[path] = k.start_mark.line + 1
                walk(v, path + ".")

    try:
        walk(yaml.compose(text), "")
    except yaml.YAMLError:
        pass
    return out


def apply_override(d: dict, override: str) -> None:
    """Set ``a.b.c=value`` in a nested dict; the value is parsed as YAML."""
    if "=" not in override:
        raise ConfigError(f"override {override!r} is not of the form key.path=value")
    path, raw = override.split("=", 1)
    keys = path.strip().split(".")
    node = d
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {path!r}: {k} is not a section")
    node[keys[-1]] = yaml.safe_load(raw)


def load_experiment(path: str | Path, overrides: Sequence[str] = ()) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"config not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    for o in overrides:
        apply_override(data, o)
    try:
        return ExperimentConfig.from_dict(data)
    except ConfigError as exc:
        lines = _key_lines(text)
        hits = [f"{k} (line {lines[k]})" for k in sorted(lines) if k.split(".")[-1] in str(exc)]
        where = f" [{'; '.join(hits)}]" if hits else ""
        raise ConfigError(f"{path}: {exc}{where}") from exc
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_resolved(cfg: ExperimentConfig, out_dir: Path) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / RESOLVED_NAME
    path.write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True), encoding="utf-8")
    return path


# -- subcommands --------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = load_experiment(args.config, args.override or [])
    if cfg.method == "ma_astar":
        raise ConfigError("method: ma_astar is a planner with nothing to train; use `magex eval --planner ma_astar`")
    out = cfg.run_dir()
    resolved = write_resolved(cfg, out)
    print(f"resolved config: {resolved}")
    print(yaml.safe_dump(cfg.to_dict(), sort_keys=True), end="")
    for seed in cfg.seeds:
        run_dir = out / f"seed_{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        tcfg = TrainConfig.from_dict({**cfg.train.to_dict(), "seed": seed})
        timing = open(run_dir / "timing.jsonl", "w", encoding="utf-8")
        t0 = time.perf_counter()

        def on_round(rec, timing=timing, t0=t0):
            timing.write(json.dumps({"round": rec["round"], "wall_clock": time.perf_counter() - t0}) + "\n")
            if not args.quiet and (rec["round"] + 1) % max(1, tcfg.n_rounds // 20) == 0:
                print(f"seed {seed} round {rec['round'] + 1}/{tcfg.n_rounds} steps {rec['env_steps']} "
                      f"success {rec['success_rate']}", flush=True)

        try:
            train(tcfg, cfg.env, cfg.method, out_dir=run_dir, on_round=on_round)
        except TrainingAborted as exc:
            print(f"training aborted (seed {seed}): {exc}; last good checkpoint: {exc.checkpoint}", file=sys.stderr)
            return EXIT_NUMERIC
        finally:
            timing.close()
        print(f"seed {seed}: metrics {run_dir / 'metrics.jsonl'}, checkpoint {run_dir / 'checkpoint.npz'}")
    return EXIT_OK


def _write_report(rep: EvalReport, out: Path | None, label: str) -> None:
    text = rep.format()
    print(f"{label}: {text}")
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.with_suffix(".txt").write_text(text + "\n", encoding="utf-8")
        out.with_suffix(".json").write_text(json.dumps(rep.to_dict(), sort_keys=True) + "\n", encoding="utf-8")


def _planner_env(args) -> EnvConfig:
    if args.config:
        env = load_experiment(args.config, args.override or []).env
    else:
        env = EnvConfig(task=Task(args.task), n_agents=args.n_agents, map_size=args.map_size, horizon=args.horizon)
    if args.planner == "ma_astar" and env.task is not Task.SIMPLE_SPREAD:
        raise ConfigError(f"ma_astar plans Simple Spread only, not {env.task.value}")
    return env


def cmd_eval(args) -> int:
    seeds = args.seeds
    out = Path(args.out) if args.out else None
    if args.planner:
        env = _planner_env(args)
        if args.planner == "random":
            rep = evaluate_random(env, args.episodes, seeds)
        else:
            from .baselines.astar import astar_controller
            rep = evaluate_controller(env, args.episodes, seeds, lambda s: reset(env, s)[0], astar_controller(env))
        _write_report(rep, out, args.planner)
        return EXIT_OK
    if not args.checkpoint:
        raise ConfigError("eval needs a checkpoint path or --planner")
    env = _planner_env(args) if (args.config or args.task) else None
    try:
        policies, header = load_checkpoint(args.checkpoint, env)
    except FileNotFoundError as exc:
        raise MissingArtifact(str(exc)) from exc
    if env is not None:
        policies.env_cfg = env
    rep = evaluate(policies, args.episodes, seeds)
    _write_report(rep, out, header["method"])
    return EXIT_OK


def _read_metrics(path: Path, metric: str) -> tuple[np.ndarray, np.ndarray]:
    if not path.exists():
        raise MissingArtifact(f"metrics file not found: {path}")
    xs, ys = [], []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{n}: malformed record ({exc.msg})") from exc
            if rec.get(metric) is not None:
                xs.append(float(rec["env_steps"]))
                ys.append(float(rec[metric]))
    return np.asarray(xs), np.asarray(ys)


def aggregate_curves(curves: Sequence[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    """Mean and population std across runs on a shared step grid.

    If the grids differ, every curve is linearly resampled onto the first
    run's grid restricted to the range all runs cover. Returns
    ``(steps, mean, std, resampled)``.
    """
    grid = curves[0][0]
    same = all(len(x) == len(grid) and np.array_equal(x, grid) for x, _ in curves)
    if not same:
        lo = max(x[0] for x, _ in curves)
        hi = min(x[-1] for x, _ in curves)
        grid = grid[(grid >= lo) & (grid <= hi)]
    ys = np.stack([np.interp(grid, x, y) if not same else y for x, y in curves])
    return grid, ys.mean(axis=0), ys.std(axis=0), not same


def cmd_plotdata(args) -> int:
    if not args.metrics:
        raise MissingArtifact("plotdata needs at least one metrics file")
    curves = [_read_metrics(Path(p), args.metric) for p in args.metrics]
    empty = [p for p, (x, _) in zip(args.metrics, curves) if len(x) == 0]
    if empty:
        raise MissingArtifact(f"no {args.metric} records in: {', '.join(map(str, empty))}")
    steps, mean, std, resampled = aggregate_curves(curves)
    if resampled:
        msg = f"step grids differ across {len(curves)} files; resampled onto {len(steps)} common points"
        log.warning(msg)
        print(f"warning: {msg}", file=sys.stderr)
    if len(steps) == 0:
        raise MissingArtifact("metrics files share no overlapping step range")
    lines = ["env_steps\tsuccess_mean\tsuccess_std\tn"]
    lines += [f"{int(s)}\t{m:.6f}\t{d:.6f}\t{len(curves)}" for s, m, d in zip(steps, mean, std)]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_replay(args) -> int:
    """Roll one greedy episode and dump it step by step."""
    out = Path(args.out)
    if args.planner:
        env = _planner_env(args)
        state, _ = reset(env, args.seed)
        if args.planner == "ma_astar":
            from .baselines.astar import PlanFollower, ma_astar
            follow = PlanFollower(ma_astar(state, env), env)
            controller = follow
        else:
            rng = np.random.default_rng(args.seed)
            controller = lambda s: rng.integers(0, env.n_actions, env.n_agents)  # noqa: E731
        header = {"planner": args.planner, "env": env.to_dict(), "seed": args.seed}
    else:
        try:
            policies, ck = load_checkpoint(args.checkpoint)
        except FileNotFoundError as exc:
            raise MissingArtifact(str(exc)) from exc
        env = policies.env_cfg
        rng = np.random.default_rng([args.seed, 0]) if policies.method == "mage_x_rg" else None
        state = start_episode(policies, eval_seed(args.seed, 0), rng)[0]
        h = hidden_zeros(1, env.n_agents)

        def controller(s):
            nonlocal h
            o, g = policies.inputs(s)
            o, g = policies.normalized(o[None], g[None])
            res = policies.forward(o, g, h)
            h = res.h_next.data
            return act(res.logits)[0][0]

        header = {"method": ck["method"], "env": env.to_dict(), "seed": args.seed}
    with TrajectoryWriter(out, header) as w:
        done = False
        while not done:
            actions = controller(state)
            res = step(state, actions, env)
            w.write(res.state.t, res.state, actions, res.rewards)
            state, done = res.state, res.done
    print(f"wrote {state.t} steps to {out}; final success {success_rate(state):.2f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="magex", description="Two-level multi-agent goal assignment and control.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one run per seed from a YAML experiment config")
    t.add_argument("config")
    t.add_argument("--override", "-o", action="append", metavar="KEY.PATH=VALUE")
    t.add_argument("--quiet", "-q", action="store_true")
    t.set_defaults(func=cmd_train)

    def env_flags(q):
        q.add_argument("--config", help="experiment config to take the env section from")
        q.add_argument("--override", "-o", action="append", metavar="KEY.PATH=VALUE")
        q.add_argument("--task", choices=[x.value for x in Task])
        q.add_argument("--n-agents", type=int, default=5)
        q.add_argument("--map-size", type=float)
        q.add_argument("--horizon", type=int)

    e = sub.add_parser("eval", help="greedy evaluation of a checkpoint or a planner")
    e.add_argument("checkpoint", nargs="?")
    e.add_argument("--planner", choices=PLANNERS)
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    e.add_argument("--out", help="report path stem; writes <stem>.txt and <stem>.json")
    env_flags(e)
    e.set_defaults(func=cmd_eval)

    d = sub.add_parser("plotdata", help="seed-aggregated learning curves as TSV")
    d.add_argument("metrics", nargs="*")
    d.add_argument("--metric", default="success_rate")
    d.add_argument("--out")
    d.set_defaults(func=cmd_plotdata)

    r = sub.add_parser("replay", help="dump one greedy episode as a trajectory file")
    r.add_argument("checkpoint", nargs="?")
    r.add_argument("--planner", choices=PLANNERS)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True)
    env_flags(r)
    r.set_defaults(func=cmd_replay)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "planner", None) and not (args.config or args.task):
        args.task = Task.SIMPLE_SPREAD.value
    try:
        return args.func(args)
    except MissingArtifact as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (ConfigError, CheckpointError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
