import json
import math
import random

import pytest

from conftest import scenario_dict
from pushnav import cli
from pushnav.cli import (EXIT_INTERNAL, EXIT_NOPATH, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, MetricsRow, aggregate,
                         main, read_metrics, write_metrics)
from pushnav.ppo import EVAL_GRID, read_curve

SMALL_TRAIN = ["--set", "trainer.n_envs=4", "--set", "trainer.steps_per_env=10", "--set", "trainer.hidden=[16,16]"]

PUSH_SCENE = scenario_dict(
    8.0, 5.0,
    movables=[{"shape": "box", "dims": [0.5, 0.6, 0.55], "pose": {"x": 4.2, "y": 2.5, "yaw": 0.0}}],
    start=(1.0, 2.5, 0.0), goal=(7.0, 2.5, 0.0))


def run(argv, capsys=None):
    rc = main([str(a) for a in argv])
    return rc


# ---------------------------------------------------------------- plan

def test_plan_empty_map(tmp_path, write_json):
    sc = write_json(scenario_dict(8.0, 5.0, start=(1.0, 2.5, 0.0), goal=(7.0, 2.5, 0.0)))
    assert run(["plan", "--scenario", sc, "--out-dir", tmp_path / "o"]) == EXIT_OK
    data = json.loads((tmp_path / "o" / "plan.json").read_text())
    # near-straight: the smoothed path barely exceeds the straight-line distance
    assert data["smooth_length_m"] <= 6.0 * 1.02
    for name in ("plan.svg", "manifest.json"):
        assert (tmp_path / "o" / name).exists()


def test_plan_walled_off(tmp_path, write_json, capsys):
    sc = write_json(scenario_dict(8.0, 5.0, statics=[(4.0, 2.5, 0.3, 5.0)], start=(1.0, 2.5, 0.0),
                                  goal=(7.0, 2.5, 0.0)))
    assert run(["plan", "--scenario", sc, "--out-dir", tmp_path]) == EXIT_NOPATH
    assert "no path" in capsys.readouterr().err


def test_plan_fig7_corridor_per_interior_vertex(tmp_path):
    assert run(["plan", "--scenario", "fig7", "--out-dir", tmp_path]) == EXIT_OK
    data = json.loads((tmp_path / "plan.json").read_text())
    assert len(data["corridor"]) == len(data["coarse"]) - 2
    assert len(data["smooth"]) == len(data["coarse"])


def test_plan_deterministic_with_manifest(tmp_path):
    for d in ("a", "b"):
        assert run(["plan", "--scenario", "fig7", "--out-dir", tmp_path / d]) == EXIT_OK
    for name in ("plan.json", "plan.svg", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert {"config_hash", "seed", "version", "config", "inputs"} <= set(man)


def test_manifest_config_reproduces_run(tmp_path):
    assert run(["plan", "--scenario", "fig7", "--out-dir", tmp_path / "a", "--set", "planner.lambda_smooth=2.0"]) == 0
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(man["config"]))
    assert run(["plan", "--scenario", "fig7", "--out-dir", tmp_path / "b", "--config", cfg]) == 0
    assert (tmp_path / "a" / "plan.json").read_bytes() == (tmp_path / "b" / "plan.json").read_bytes()
    assert json.loads((tmp_path / "b" / "manifest.json").read_text())["config_hash"] == man["config_hash"]


# ---------------------------------------------------------------- train

def test_train_smoke_10k(tmp_path):
    assert run(["train", "--steps", 10_000, "--out-dir", tmp_path, "--quiet"]) == EXIT_OK
    assert (tmp_path / "policy.ckpt").exists()
    assert len(read_curve(tmp_path / "curve.tsv")) >= 1


def test_train_three_modes_aligned(tmp_path):
    logs = {}
    for mode in ("two_stage", "baseline1_all_on", "baseline2_task_only"):
        d = tmp_path / mode
        assert run(["train", "--reward-mode", mode, "--steps", 120, "--seed", 3, "--out-dir", d, "--quiet",
                    *SMALL_TRAIN]) == EXIT_OK
        logs[mode] = read_curve(d / "curve.tsv")
    keys = [[(r.iteration, r.env_steps) for r in rows] for rows in logs.values()]
    assert keys[0] == keys[1] == keys[2]
    assert len(keys[0]) == 3


def test_train_bad_mode(tmp_path, capsys):
    assert run(["train", "--reward-mode", "three_stage", "--out-dir", tmp_path]) == EXIT_USAGE


def cli_outputs(d, names):
    return {n: (d / n).read_bytes() for n in names}


def train_determinism(tmp_path):
    outs = []
    for tag in ("a", "b"):
        d = tmp_path / f"train_{tag}"
        assert run(["train", "--steps", 120, "--out-dir", d, "--quiet", *SMALL_TRAIN]) == EXIT_OK
        assert len(read_curve(d / "curve.tsv")) == 3
        outs.append(cli_outputs(d, ("curve.tsv", "policy.ckpt", "curve.svg", "manifest.json")))
    return outs[0] == outs[1]


def test_train_bitwise_deterministic(tmp_path):
    assert train_determinism(tmp_path)


# ---------------------------------------------------------------- eval

def eval_rows(path):
    lines = path.read_text().strip().splitlines()
    return [ln.split(",") for ln in lines[1:]]


def test_eval_grid_rows(tmp_path):
    assert run(["eval", "--scripted", "--trials", 2, "--out-dir", tmp_path]) == EXIT_OK
    rows = eval_rows(tmp_path / "eval.csv")
    assert len(rows) == 1 + len(EVAL_GRID)
    assert rows[-1][0] == "Cylinder" and rows[-1][1] == "D35x55"
    assert [r[1] for r in rows[1:4]] == ["60x60x60", "45x50x50", "50x70x50"]
    assert all(r[4] == "2" for r in rows)


def test_eval_default_trials():
    args = cli.build_parser().parse_args(["eval", "--scripted"])
    assert args.trials == 50


def eval_determinism(tmp_path):
    outs = []
    for tag in ("a", "b"):
        d = tmp_path / f"eval_{tag}"
        assert run(["eval", "--scripted", "--trials", 3, "--out-dir", d]) == EXIT_OK
        outs.append(cli_outputs(d, ("eval.csv", "manifest.json")))
    return outs[0] == outs[1]


def test_eval_bitwise_deterministic(tmp_path):
    assert eval_determinism(tmp_path)


@pytest.mark.slow
def test_eval_scripted_in_distribution(tmp_path):
    assert run(["eval", "--scripted", "--out-dir", tmp_path]) == EXIT_OK
    rows = eval_rows(tmp_path / "eval.csv")
    # reference box plus the three size rows share the training friction and mass
    for r in rows[:4]:
        assert float(r[5]) >= 0.9, r


def test_eval_needs_actor(tmp_path):
    assert run(["eval", "--out-dir", tmp_path]) == EXIT_USAGE


def test_eval_checkpoint_layout_mismatch(tmp_path):
    assert run(["train", "--steps", 0, "--out-dir", tmp_path, "--quiet", *SMALL_TRAIN]) == EXIT_OK
    rc = run(["eval", "--checkpoint", tmp_path / "policy.ckpt", "--trials", 1, "--out-dir", tmp_path,
              "--set", "env.frame_stack=3"])
    assert rc == EXIT_VALIDATION


# ---------------------------------------------------------------- nav

def nav_row(d):
    return read_metrics(d / "metrics.csv")[0]


def test_nav_no_movables_modes_coincide(tmp_path, write_json):
    sc = write_json(scenario_dict(8.0, 5.0, start=(1.0, 2.5, 0.0), goal=(7.0, 2.5, 0.0)))
    rows = []
    for mode in ("on", "off"):
        assert run(["nav", "--scenario", sc, "--interactive", mode, "--out-dir", tmp_path / mode]) == EXIT_OK
        rows.append(nav_row(tmp_path / mode))
    on, off = rows
    assert on.outcome == off.outcome == "success"
    assert abs(on.path_length_m - off.path_length_m) <= 0.01 * off.path_length_m
    assert abs(on.traversal_time_s - off.traversal_time_s) <= 0.01 * off.traversal_time_s


def test_nav_push_scene_both_modes(tmp_path, write_json):
    sc = write_json(PUSH_SCENE)
    assert run(["nav", "--scenario", sc, "--scripted", "--out-dir", tmp_path / "on"]) == EXIT_OK
    assert run(["nav", "--scenario", sc, "--interactive", "off", "--out-dir", tmp_path / "off"]) == EXIT_OK
    on, off = nav_row(tmp_path / "on"), nav_row(tmp_path / "off")
    assert on.outcome == off.outcome == "success"
    # open floor: the detour is cheap, so only the push itself is checked here
    report = json.loads((tmp_path / "on" / "report.json").read_text())
    assert report["summary"]["pushes"] >= 1
    assert json.loads((tmp_path / "off" / "report.json").read_text())["summary"]["pushes"] == 0
    for name in ("report.json", "trajectory.svg", "manifest.json"):
        assert (tmp_path / "on" / name).exists()


@pytest.mark.slow
def test_nav_fig7_off_longer(tmp_path):
    assert run(["nav", "--scenario", "fig7", "--scripted", "--out-dir", tmp_path / "on"]) == EXIT_OK
    assert run(["nav", "--scenario", "fig7", "--interactive", "off", "--out-dir", tmp_path / "off"]) == EXIT_OK
    assert nav_row(tmp_path / "off").path_length_m > nav_row(tmp_path / "on").path_length_m


def test_nav_blocked_off_is_failed_row(tmp_path):
    assert run(["nav", "--scenario", "blocked", "--interactive", "off", "--out-dir", tmp_path]) == EXIT_OK
    text = (tmp_path / "metrics.csv").read_text().splitlines()
    cells = text[1].split(",")
    assert cells[1:5] == ["no_interaction", "", "", "failed"]


def test_nav_interactive_needs_actor(tmp_path):
    assert run(["nav", "--scenario", "fig7", "--out-dir", tmp_path]) == EXIT_USAGE


def nav_determinism(tmp_path, scenario):
    outs = []
    for tag in ("a", "b"):
        d = tmp_path / f"nav_{tag}"
        assert run(["nav", "--scenario", scenario, "--scripted", "--out-dir", d]) == EXIT_OK
        outs.append(cli_outputs(d, ("report.json", "metrics.csv", "trajectory.svg", "manifest.json")))
    return outs[0] == outs[1]


def test_nav_bitwise_deterministic(tmp_path, write_json):
    assert nav_determinism(tmp_path, write_json(PUSH_SCENE))


# ---------------------------------------------------------------- bench and metrics

def test_bench_counts_rows(tmp_path, write_json):
    suite = tmp_path / "suite"
    suite.mkdir()
    (suite / "push.json").write_text(json.dumps(PUSH_SCENE))
    assert run(["bench", "--suite", suite, "--scripted", "--repetitions", 5, "--out-dir", tmp_path / "o"]) == 0
    rows = read_metrics(tmp_path / "o" / "metrics.csv")
    assert len(rows) == 10
    assert sorted({r.seed for r in rows}) == [0, 1, 2, 3, 4]
    assert {r.method for r in rows} == {"interactive", "no_interaction"}
    summary = (tmp_path / "o" / "summary.csv").read_text().splitlines()
    assert len(summary) == 3
    assert (tmp_path / "o" / "manifest.json").exists()


def test_bench_empty_suite(tmp_path):
    (tmp_path / "empty").mkdir()
    assert run(["bench", "--suite", tmp_path / "empty", "--out-dir", tmp_path]) == EXIT_USAGE


def test_aggregate_single_value():
    cell = aggregate([MetricsRow("fig7", "interactive", 58.2, 5.42, "success", 0)])[0]
    assert cell["time_mean"] == 58.2 and cell["time_std"] == 0.0
    assert cell["runs"] == 1 and cell["failures"] == 0


def random_rows(rng, n=40):
    rows = []
    for k in range(n):
        failed = rng.random() < 0.2
        t = None if failed else rng.uniform(10, 120)
        length = None if failed else rng.uniform(3, 15)
        rows.append(MetricsRow(rng.choice(["a", "b"]), rng.choice(["interactive", "no_interaction"]), t, length,
                               "failed" if failed else "success", k))
    return rows


def test_aggregate_recompute_oracle():
    rng = random.Random(5)
    rows = random_rows(rng)
    rng.shuffle(rows)
    cells = {(c["scenario"], c["method"]): c for c in aggregate(rows)}
    for key, c in cells.items():
        group = [r for r in rows if (r.scenario, r.method) == key]
        ok = [r.traversal_time_s for r in group if r.outcome == "success"]
        mean = sum(ok) / len(ok)
        std = math.sqrt(sum((x - mean) ** 2 for x in ok) / len(ok))
        assert c["runs"] == len(group)
        assert c["failures"] == len(group) - len(ok)
        assert abs(c["time_mean"] - mean) < 1e-9
        assert abs(c["time_std"] - std) < 1e-9


def test_aggregate_order_independent():
    rows = random_rows(random.Random(6))
    assert aggregate(rows) == aggregate(list(reversed(rows)))


def test_metrics_csv_round_trip():
    text = write_metrics(random_rows(random.Random(7)))
    assert write_metrics(read_metrics(text)) == text


def test_metrics_row_invariants():
    with pytest.raises(ValueError):
        MetricsRow("s", "interactive", 1.0, 2.0, "failed", 0)
    with pytest.raises(ValueError):
        MetricsRow("s", "teleport", 1.0, 2.0, "success", 0)
    with pytest.raises(ValueError):
        MetricsRow("s", "interactive", 1.0, 2.0, "partial", 0)


# ---------------------------------------------------------------- configuration and exit codes

def test_no_subcommand():
    assert run([]) == EXIT_USAGE


def test_unknown_config_key(tmp_path):
    assert run(["plan", "--scenario", "fig7", "--out-dir", tmp_path, "--set", "planner.bogus=1"]) == EXIT_VALIDATION


def test_malformed_set(tmp_path):
    assert run(["plan", "--scenario", "fig7", "--out-dir", tmp_path, "--set", "nodot"]) == EXIT_USAGE


def test_malformed_scenario(tmp_path, write_json):
    sc = write_json({"map": {"width_m": 5}})
    assert run(["plan", "--scenario", sc, "--out-dir", tmp_path]) == EXIT_VALIDATION


def test_missing_scenario(tmp_path):
    assert run(["plan", "--scenario", tmp_path / "nope.json", "--out-dir", tmp_path]) == EXIT_VALIDATION


@pytest.mark.parametrize("key,value", [("env.control_rate", 50), ("env.horizon", 50), ("env.action_scale", "[0.3,0.6,0.25,0.25,0.05,0]"),
                                       ("env.zone_radius", 0.3), ("env.success_dist", 0.2),
                                       ("env.reward_weights", "[1,1,1,1,1,1,1]"),
                                       ("trainer.curriculum_threshold", 0.5)])
def test_locked_keys_need_override(tmp_path, key, value):
    args = ["plan", "--scenario", "fig7", "--out-dir", tmp_path, "--set", f"{key}={value}"]
    assert run(args) == EXIT_VALIDATION
    assert run(args + ["--override-paper"]) == EXIT_OK


def test_unlocked_key_changes_hash(tmp_path):
    assert run(["plan", "--scenario", "fig7", "--out-dir", tmp_path / "a"]) == 0
    assert run(["plan", "--scenario", "fig7", "--out-dir", tmp_path / "b", "--set", "navexec.d_push=1.5"]) == 0
    ha = json.loads((tmp_path / "a" / "manifest.json").read_text())["config_hash"]
    hb = json.loads((tmp_path / "b" / "manifest.json").read_text())["config_hash"]
    assert ha != hb


def test_internal_error_code(tmp_path, monkeypatch):
    def boom(args):
        raise RuntimeError("unexpected")

    monkeypatch.setattr(cli, "cmd_plan", boom)
    assert run(["plan", "--scenario", "fig7", "--out-dir", tmp_path]) == EXIT_INTERNAL


def test_nonpositive_trials(tmp_path):
    assert run(["eval", "--scripted", "--trials", 0, "--out-dir", tmp_path]) == EXIT_USAGE
