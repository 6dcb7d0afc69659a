"""Command-line entry point: plan, train, eval, nav and bench."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import json
import math
import statistics
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, viz
from .navexec import NavConfig, NoFeasibleTarget, run_navigation
from .physics import RandomizationRanges
from .planner import NoPath, PlannerConfig, plan
from .ppo import (EVAL_GRID, IN_DISTRIBUTION, CheckpointError, PolicyActor, RandomActor, ScriptedActor, TrainConfig,
                  evaluate_policy, load_checkpoint, read_curve, train)
from .pushenv import REWARD_MODES, EnvConfig
from .world import ScenarioError, bundled_scenario, load_scenario, rasterize

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_NOPATH, EXIT_INTERNAL = 0, 2, 3, 4, 5

SECTIONS = {
    "env": EnvConfig,
    "physics": RandomizationRanges,
    "planner": PlannerConfig,
    "trainer": TrainConfig,
    "navexec": NavConfig,
}
# fields owned by other sections or by dedicated flags
_SKIP = {"env": {"randomization", "arm", "reward_mode"}, "trainer": {"reward_mode", "seed"}}
# published constants: changing them requires --override-paper
LOCKED = frozenset({
    ("env", "control_rate"), ("env", "horizon"), ("env", "action_scale"), ("env", "reward_weights"),
    ("env", "zone_radius"), ("env", "success_dist"), ("trainer", "curriculum_threshold"),
})
DEFAULT_TRIALS = 50


class UsageError(Exception):
    pass


class ConfigError(ValueError):
    pass


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


def default_tree() -> dict:
    tree = {}
    for sec, cls in SECTIONS.items():
        inst = cls()
        tree[sec] = {f.name: _plain(getattr(inst, f.name)) for f in dataclasses.fields(cls)
                     if f.name not in _SKIP.get(sec, ())}
    return tree


def _coerce(sec: str, key: str, old, new):
    where = f"{sec}.{key}"
    if isinstance(old, bool):
        if not isinstance(new, bool):
            raise ConfigError(f"{where}: expected a boolean")
        return new
    if isinstance(old, int):
        if isinstance(new, bool) or not isinstance(new, (int, float)) or float(new) != int(new):
            raise ConfigError(f"{where}: expected an integer")
        return int(new)
    if isinstance(old, float):
        if isinstance(new, bool) or not isinstance(new, (int, float)) or not math.isfinite(new):
            raise ConfigError(f"{where}: expected a finite number")
        return float(new)
    if isinstance(old, list):
        if not isinstance(new, list) or len(new) != len(old):
            raise ConfigError(f"{where}: expected a list of {len(old)} values")
        return [_coerce(sec, key, o, n) for o, n in zip(old, new)]
    if isinstance(old, str):
        if not isinstance(new, str):
            raise ConfigError(f"{where}: expected a string")
        return new
    raise ConfigError(f"{where}: not configurable")


def merge(tree: dict, overrides: dict, allow_locked: bool = False) -> dict:
    """New tree with ``overrides`` applied; unknown keys and locked changes are rejected."""
    out = json.loads(json.dumps(tree))
    if not isinstance(overrides, dict):
        raise ConfigError("configuration must be an object of sections")
    for sec, values in overrides.items():
        if sec not in out:
            raise ConfigError(f"unknown section {sec!r}")
        if not isinstance(values, dict):
            raise ConfigError(f"section {sec!r} must be an object")
        for key, val in values.items():
            if key not in out[sec]:
                raise ConfigError(f"unknown key {sec}.{key}")
            new = _coerce(sec, key, out[sec][key], val)
            if (sec, key) in LOCKED and new != out[sec][key] and not allow_locked:
                raise ConfigError(f"{sec}.{key} is a published constant; pass --override-paper to change it")
            out[sec][key] = new
    return out


def _build(cls, values: dict, **extra):
    kw = {}
    for f in dataclasses.fields(cls):
        if f.name in values:
            v = values[f.name]
            kw[f.name] = tuple(v) if isinstance(v, list) else v
    kw.update(extra)
    return cls(**kw)


@dataclass
class RunConfig:
    tree: dict
    seed: int = 0
    reward_mode: str = "two_stage"

    def env(self) -> EnvConfig:
        rand = _build(RandomizationRanges, self.tree["physics"])
        return _build(EnvConfig, self.tree["env"], randomization=rand, reward_mode=self.reward_mode)

    def planner(self, footprint=None) -> PlannerConfig:
        cfg = _build(PlannerConfig, self.tree["planner"])
        return dataclasses.replace(cfg, footprint=tuple(footprint)) if footprint is not None else cfg

    def trainer(self) -> TrainConfig:
        return _build(TrainConfig, self.tree["trainer"], reward_mode=self.reward_mode, seed=self.seed)

    def nav(self) -> NavConfig:
        return _build(NavConfig, self.tree["navexec"])

    def canonical(self) -> str:
        return json.dumps({"tree": self.tree, "seed": self.seed, "reward_mode": self.reward_mode}, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def _parse_set(items) -> dict:
    out: dict = {}
    for item in items or ():
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise UsageError(f"--set expects section.key=value, got {item!r}")
        path, raw = item.split("=", 1)
        sec, key = path.split(".", 1)
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        out.setdefault(sec, {})[key] = val
    return out


def resolve_config(args) -> RunConfig:
    """Defaults < config file < command-line flags."""
    tree = default_tree()
    allow = bool(getattr(args, "override_paper", False))
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
        tree = merge(tree, data, allow)
    tree = merge(tree, _parse_set(getattr(args, "set", None)), allow)
    if getattr(args, "steps", None) is not None:
        tree = merge(tree, {"trainer": {"total_steps": args.steps}}, allow)
    return RunConfig(tree, int(args.seed), getattr(args, "reward_mode", None) or "two_stage")


# ---------------------------------------------------------------- metrics rows

@dataclass
class MetricsRow:
    scenario: str
    method: str
    traversal_time_s: float | None
    path_length_m: float | None
    outcome: str
    seed: int

    FIELDS = ("scenario", "method", "traversal_time_s", "path_length_m", "outcome", "seed")

    def __post_init__(self):
        if self.method not in ("interactive", "no_interaction"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.outcome not in ("success", "failed"):
            raise ValueError(f"unknown outcome {self.outcome!r}")
        if self.outcome == "failed" and (self.traversal_time_s is not None or self.path_length_m is not None):
            raise ValueError("failed rows carry no time or length")

    def cells(self) -> list:
        def num(v):
            return "" if v is None else repr(float(v))

        return [self.scenario, self.method, num(self.traversal_time_s), num(self.path_length_m), self.outcome,
                str(self.seed)]


def write_metrics(rows, path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(MetricsRow.FIELDS)
    for r in rows:
        w.writerow(r.cells())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_metrics(source) -> list:
    text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source else source
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != MetricsRow.FIELDS:
        raise ValueError("unexpected metrics header")
    rows = []
    for cells in reader:
        f = dict(zip(header, cells))
        rows.append(MetricsRow(f["scenario"], f["method"],
                               float(f["traversal_time_s"]) if f["traversal_time_s"] else None,
                               float(f["path_length_m"]) if f["path_length_m"] else None,
                               f["outcome"], int(f["seed"])))
    return rows


def aggregate(rows) -> list:
    """Mean and population std of time and length per (scenario, method), over successful rows."""
    cells: dict = {}
    for r in sorted(rows, key=lambda r: (r.scenario, r.method, r.seed)):
        cells.setdefault((r.scenario, r.method), []).append(r)
    out = []
    for (sc, method), group in sorted(cells.items()):
        ok = [r for r in group if r.outcome == "success"]
        times = [r.traversal_time_s for r in ok]
        lengths = [r.path_length_m for r in ok]
        out.append({
            "scenario": sc, "method": method, "runs": len(group), "failures": len(group) - len(ok),
            "time_mean": statistics.fmean(times) if times else None,
            "time_std": statistics.pstdev(times) if times else None,
            "length_mean": statistics.fmean(lengths) if lengths else None,
            "length_std": statistics.pstdev(lengths) if lengths else None,
        })
    return out


def write_summary(cells, path) -> None:
    cols = ("scenario", "method", "runs", "failures", "time_mean", "time_std", "length_mean", "length_std")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for c in cells:
        w.writerow(["" if c[k] is None else (repr(c[k]) if isinstance(c[k], float) else c[k]) for k in cols])
    Path(path).write_text(buf.getvalue())


# ---------------------------------------------------------------- helpers

def _sha(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _out_dir(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def write_manifest(out: Path, command: str, rc: RunConfig, inputs: dict, extra: dict | None = None) -> None:
    data = {"command": command, "version": __version__, "seed": rc.seed, "reward_mode": rc.reward_mode,
            "config_hash": rc.digest(), "config": rc.tree, "inputs": inputs}
    if extra:
        data.update(extra)
    (out / "manifest.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _scenario(arg: str, seed: int | None = None):
    p = Path(arg)
    if not p.exists():
        p = bundled_scenario(arg)
        if not p.exists():
            raise ScenarioError("file", f"no scenario file or bundled scenario named {arg!r}")
    sc = load_scenario(p)
    if seed is not None:
        sc = dataclasses.replace(sc, seed=seed)
    return sc, p


def _actor(args, env_cfg: EnvConfig):
    if getattr(args, "scripted", False):
        return ScriptedActor(), {"actor": "scripted"}
    if getattr(args, "random", False):
        return RandomActor(args.seed), {"actor": "random"}
    if getattr(args, "checkpoint", None):
        policy = load_checkpoint(args.checkpoint, env_cfg.policy_input_dim, env_cfg.frame_stack)
        return PolicyActor(policy), {"actor": "checkpoint", "checkpoint_sha256": _sha(args.checkpoint)}
    return None, {}


def _fmt(v) -> str:
    return "N/A" if v is None else f"{v:.2f}"


# ---------------------------------------------------------------- commands

def cmd_plan(args) -> int:
    rc = resolve_config(args)
    sc, path = _scenario(args.scenario, args.seed_given)
    out = _out_dir(args)
    try:
        p = plan(rasterize(sc), sc.start, sc.goal, rc.planner(sc.footprint))
    except NoPath as exc:
        print(f"no path: {exc}", file=sys.stderr)
        return EXIT_NOPATH
    data = p.to_dict()
    data["coarse_length_m"] = p.coarse.length
    data["smooth_length_m"] = p.smooth.length
    (out / "plan.json").write_text(json.dumps(data, indent=1) + "\n")
    (out / "plan.svg").write_text(viz.plan_svg(sc, p))
    write_manifest(out, "plan", rc, {"scenario": str(path), "scenario_sha256": _sha(path)})
    print(f"{sc.name}: coarse {p.coarse.length:.2f} m, smoothed {p.smooth.length:.2f} m, "
          f"{len(p.corridor)} corridor boxes, {p.smooth.iterations} smoothing iterations")
    return EXIT_OK


def cmd_train(args) -> int:
    rc = resolve_config(args)
    out = _out_dir(args)
    tcfg = rc.trainer()
    env_cfg = rc.env()

    def progress(row):
        if not args.quiet:
            print(row.to_line(), flush=True)

    res = train(tcfg, env_cfg, out / "curve.tsv", out / "policy.ckpt", progress)
    (out / "curve.svg").write_text(viz.curves_svg({rc.reward_mode: res.curve}))
    final = float(np.mean(res.recent_success)) if res.recent_success else 0.0
    write_manifest(out, "train", rc, {}, {"iterations": len(res.curve), "gating_violations": res.gating_violations,
                                          "final_success_rate": final})
    print(f"{len(res.curve)} iterations, final-100 success {final:.3f}, gating violations {res.gating_violations}")
    return EXIT_OK


def cmd_eval(args) -> int:
    rc = resolve_config(args)
    env_cfg = rc.env()
    actor, info = _actor(args, env_cfg)
    if actor is None:
        raise UsageError("eval needs --checkpoint, --scripted or --random")
    out = _out_dir(args)
    rows = [("Reference box (training distribution)", IN_DISTRIBUTION)] + [(n, s) for n, s in EVAL_GRID]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("object", "size_cm", "friction", "mass_kg", "trials", "success_rate", "mean_final_dist_m"))
    for k, (name, spec) in enumerate(rows):
        res = evaluate_policy(actor, env_cfg, args.trials, spec, seed=rc.seed + k)
        size = "x".join(f"{100 * d:g}" for d in spec.dims)
        if spec.shape == "cylinder":
            size = f"D{100 * spec.dims[0]:g}x{100 * spec.dims[1]:g}"
        w.writerow((name, size, repr(spec.mu), repr(spec.mass), args.trials, repr(res.success_rate),
                    repr(res.mean_final_dist)))
        print(f"{name:40s} {size:12s} mu={spec.mu:<4g} m={spec.mass:<4g} success={res.success_rate:.2f}")
    (out / "eval.csv").write_text(buf.getvalue())
    write_manifest(out, "eval", rc, info, {"trials": args.trials})
    return EXIT_OK


def _nav_once(sc, rc: RunConfig, actor, interactive: bool):
    report = run_navigation(sc, actor, rc.nav(), interactive=interactive, planner_cfg=rc.planner(sc.footprint),
                            env_cfg=rc.env())
    method = "interactive" if interactive else "no_interaction"
    row = MetricsRow(sc.name, method, report.traversal_time_s, report.path_length_m,
                     "success" if report.outcome == "success" else "failed", sc.seed)
    return report, row


def cmd_nav(args) -> int:
    rc = resolve_config(args)
    sc, path = _scenario(args.scenario, args.seed_given)
    interactive = args.interactive == "on"
    actor, info = _actor(args, rc.env())
    if interactive and sc.movables and actor is None:
        raise UsageError("interactive navigation needs --checkpoint or --scripted")
    out = _out_dir(args)
    report, row = _nav_once(sc, rc, actor, interactive)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1) + "\n")
    write_metrics([row], out / "metrics.csv")
    (out / "trajectory.svg").write_text(viz.trajectory_svg(sc, report, report.plans[-1:]))
    info.update({"scenario": str(path), "scenario_sha256": _sha(path)})
    write_manifest(out, "nav", rc, info, {"interactive": interactive})
    print(f"{sc.name} [{row.method}] {row.outcome}: time {_fmt(row.traversal_time_s)} s, "
          f"length {_fmt(row.path_length_m)} m")
    return EXIT_OK


def cmd_bench(args) -> int:
    rc = resolve_config(args)
    suite = Path(args.suite)
    files = sorted(suite.glob("*.json")) if suite.is_dir() else [suite]
    if not files:
        raise UsageError(f"no scenario files in {suite}")
    actor, info = _actor(args, rc.env())
    out = _out_dir(args)
    rows = []
    for f in files:
        base, _ = _scenario(str(f))
        for rep in range(args.repetitions):
            sc = dataclasses.replace(base, seed=rc.seed + rep)
            for interactive in (True, False):
                if interactive and sc.movables and actor is None:
                    raise UsageError("interactive runs need --checkpoint or --scripted")
                report, row = _nav_once(sc, rc, actor, interactive)
                rows.append(row)
                if rep == 0:
                    (out / f"{sc.name}_{row.method}.svg").write_text(viz.trajectory_svg(sc, report, report.plans[-1:]))
                print(f"{sc.name} seed={sc.seed} [{row.method}] {row.outcome} time {_fmt(row.traversal_time_s)}",
                      flush=True)
    write_metrics(rows, out / "metrics.csv")
    cells = aggregate(rows)
    write_summary(cells, out / "summary.csv")
    curves = {}
    for c in args.curves or ():
        curves[Path(c).stem] = read_curve(c)
    if curves:
        (out / "curves.svg").write_text(viz.curves_svg(curves))
    info.update({"suite": [str(f) for f in files], "repetitions": args.repetitions})
    write_manifest(out, "bench", rc, info, {"failed_rows": sum(r.outcome == "failed" for r in rows)})
    for c in cells:
        flag = f" ({c['failures']} failed)" if c["failures"] else ""
        print(f"{c['scenario']} {c['method']}: time {_fmt(c['time_mean'])} +/- {_fmt(c['time_std'])} s{flag}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with configuration sections")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", default="out")
    common.add_argument("--override-paper", action="store_true", help="allow changing locked published constants")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
    actor = _Parser(add_help=False)
    g = actor.add_mutually_exclusive_group()
    g.add_argument("--checkpoint")
    g.add_argument("--scripted", action="store_true", help="use the hand-written pusher")

    p = _Parser(prog="pushnav", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sp = sub.add_parser("plan", parents=[common])
    sp.add_argument("--scenario", required=True)
    sp.set_defaults(func=cmd_plan)
    st = sub.add_parser("train", parents=[common])
    st.add_argument("--reward-mode", choices=REWARD_MODES, default="two_stage")
    st.add_argument("--steps", type=int, help="environment step budget")
    st.add_argument("--quiet", action="store_true")
    st.set_defaults(func=cmd_train)
    se = sub.add_parser("eval", parents=[common, actor])
    se.add_argument("--random", action="store_true", help="uniform random actions")
    se.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    se.set_defaults(func=cmd_eval)
    sn = sub.add_parser("nav", parents=[common, actor])
    sn.add_argument("--scenario", required=True)
    sn.add_argument("--interactive", choices=("on", "off"), default="on")
    sn.set_defaults(func=cmd_nav)
    sb = sub.add_parser("bench", parents=[common, actor])
    sb.add_argument("--suite", required=True, help="directory of scenario files or a single file")
    sb.add_argument("--repetitions", type=int, default=5)
    sb.add_argument("--curves", nargs="*", help="curve logs to plot")
    sb.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a subcommand is required (plan, train, eval, nav, bench)")
        if getattr(args, "trials", 1) <= 0 or getattr(args, "repetitions", 1) <= 0:
            raise UsageError("--trials and --repetitions must be positive")
        args.seed_given = args.seed
        if args.seed is None:
            args.seed = 0
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ScenarioError, CheckpointError, ValueError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NoPath, NoFeasibleTarget) as exc:
        print(f"no path: {exc}", file=sys.stderr)
        return EXIT_NOPATH
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
