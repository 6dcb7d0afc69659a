"""Acceptance suite: one test and one summary line per criterion.

Training runs are cached under ``.acceptance_runs`` (override with PUSHNAV_ACCEPTANCE_DIR), keyed by
configuration and package source, so a rerun on unchanged code reuses them.
"""

import hashlib
import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import conftest
from pushnav.navexec import run_navigation
from pushnav.planner import hybrid_astar
from pushnav.ppo import (EVAL_GRID, IN_DISTRIBUTION, PolicyActor, ScriptedActor, TrainConfig, compute_gae,
                         evaluate_policy, load_checkpoint, read_curve, train)
from pushnav.pushenv import EnvConfig
from pushnav.world import GridMap, Pose2, bundled_scenario, load_scenario

ROOT = Path(__file__).resolve().parents[1]
CACHE = Path(os.environ.get("PUSHNAV_ACCEPTANCE_DIR", ROOT / ".acceptance_runs"))
MODES = ("two_stage", "baseline1_all_on", "baseline2_task_only")


def record(n, ok, detail):
    conftest.ACCEPTANCE_LINES[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"


def source_digest():
    h = hashlib.sha256()
    for f in sorted((ROOT / "src" / "pushnav").glob("*.py")):
        h.update(f.read_bytes())
    return h.hexdigest()


def trained(mode, steps, seed=0):
    """Train once per (mode, budget, config, source); returns (meta, curve, checkpoint path)."""
    cfg = TrainConfig(total_steps=steps, reward_mode=mode, seed=seed)
    env_cfg = EnvConfig()
    key = hashlib.sha256((repr(cfg) + repr(env_cfg) + source_digest()).encode()).hexdigest()[:16]
    d = CACHE / f"{mode}_{steps}_{key}"
    meta_path = d / "result.json"
    if not meta_path.exists():
        d.mkdir(parents=True, exist_ok=True)
        t0 = time.time()
        res = train(cfg, env_cfg, d / "curve.tsv", d / "policy.ckpt")
        meta = {"gating_violations": res.gating_violations, "steps_audited": res.steps_audited,
                "reward_range": list(res.reward_range), "recent_success": [bool(s) for s in res.recent_success],
                "seconds": time.time() - t0}
        meta_path.write_text(json.dumps(meta))
    return json.loads(meta_path.read_text()), read_curve(d / "curve.tsv"), d / "policy.ckpt"


def final_success(meta):
    s = meta["recent_success"]
    return float(np.mean(s)) if s else 0.0


# ---------------------------------------------------------------- 1: reward ablation ordering

@pytest.mark.slow
def test_criterion_1_two_stage_ablation():
    runs = {m: trained(m, 1_000_000) for m in MODES}
    succ = {m: final_success(runs[m][0]) for m in MODES}
    rew = {m: runs[m][1][-1].mean_reward for m in MODES}
    longest = max(runs[m][0]["seconds"] for m in MODES)
    b1 = rew["baseline1_all_on"]
    reward_ok = rew["two_stage"] >= b1 or abs(rew["two_stage"] - b1) <= 0.05 * abs(b1)
    ok = succ["two_stage"] > succ["baseline2_task_only"] and succ["baseline2_task_only"] <= 0.05 and reward_ok \
        and longest <= 45 * 60
    record(1, ok, "final-100 success " + ", ".join(f"{m}={succ[m]:.2f}" for m in MODES)
           + "; final mean reward " + ", ".join(f"{m}={rew[m]:.3f}" for m in MODES)
           + f"; slowest run {longest / 60:.1f} min")
    assert ok


# ---------------------------------------------------------------- 2: pushing success after full training

@pytest.mark.slow
def test_criterion_2_pushing_success():
    _, _, ckpt = trained("two_stage", 3_000_000)
    cfg = EnvConfig()
    actor = PolicyActor(load_checkpoint(ckpt, cfg.policy_input_dim, cfg.frame_stack))
    ind = evaluate_policy(actor, cfg, 50, IN_DISTRIBUTION).success_rate
    cyl = evaluate_policy(actor, cfg, 50, EVAL_GRID[-1][1]).success_rate
    ok = ind >= 0.70 and cyl >= 0.50
    record(2, ok, f"in-distribution box {ind:.2f} (need 0.70), cylinder {cyl:.2f} (need 0.50), 50 trials each")
    assert ok


# ---------------------------------------------------------------- 3: navigation benchmark

def timed_nav(sc, actor, interactive):
    t0 = time.time()
    rep = run_navigation(sc, actor, interactive=interactive)
    return rep, time.time() - t0


def test_criterion_3_navigation_benchmark():
    sc = load_scenario(bundled_scenario("fig7"))
    on, t_on = timed_nav(sc, ScriptedActor(), True)
    off, t_off = timed_nav(sc, None, False)
    ok = on.outcome == off.outcome == "success"
    detail = f"outcomes {on.outcome}/{off.outcome}"
    if ok:
        lr = on.path_length_m / off.path_length_m
        tr = on.traversal_time_s / off.traversal_time_s
        ok = lr <= 0.8 and tr <= 0.8 and max(t_on, t_off) <= 120
        detail = (f"scripted pusher: length {on.path_length_m:.2f}/{off.path_length_m:.2f} m = {lr:.2f}, "
                  f"time {on.traversal_time_s:.2f}/{off.traversal_time_s:.2f} s = {tr:.2f}, "
                  f"runtime {t_on:.1f}/{t_off:.1f} s")
    learned = sorted(CACHE.glob("two_stage_3000000_*/policy.ckpt"))
    if learned:
        cfg = EnvConfig()
        pol = PolicyActor(load_checkpoint(learned[-1], cfg.policy_input_dim, cfg.frame_stack))
        rep, _ = timed_nav(sc, pol, True)
        ratio = "n/a" if rep.outcome != "success" or off.outcome != "success" else \
            f"{rep.path_length_m / off.path_length_m:.2f}"
        detail += f"; learned pusher: {rep.outcome}, length ratio {ratio}"
    record(3, ok, detail)
    assert ok


# ---------------------------------------------------------------- 4: reward gating over a full log

@pytest.mark.slow
def test_criterion_4_reward_gating():
    metas = [trained("two_stage", 1_000_000)[0], trained("two_stage", 3_000_000)[0]]
    steps = sum(m["steps_audited"] for m in metas)
    viol = sum(m["gating_violations"] for m in metas)
    lo = min(m["reward_range"][0] for m in metas)
    hi = max(m["reward_range"][1] for m in metas)
    ok = viol == 0 and steps >= 1_000_000 and lo >= -5.1 and hi <= 2.5
    record(4, ok, f"{viol} violations over {steps} audited steps, per-step total in [{lo:.3f}, {hi:.3f}]")
    assert ok


# ---------------------------------------------------------------- 5: QP oracle equivalence

def test_criterion_5_qp_oracle():
    from test_planner import qp_instance_check, random_qp_instance

    rng = np.random.default_rng(7)
    tallies = np.zeros(4, dtype=int)
    for _ in range(100):
        n = int(rng.integers(3, 7))
        pts, boxes = random_qp_instance(rng, n)
        tallies += np.array(qp_instance_check(pts, boxes, rng.uniform(0.5, 20.0), rng.uniform(0.1, 5.0)))
    ok = bool(np.all(tallies == 100))
    record(5, ok, f"of 100 instances: match {tallies[0]}, exact endpoints {tallies[1]}, monotone {tallies[2]}, "
                  f"feasible {tallies[3]}")
    assert ok


# ---------------------------------------------------------------- 6: GAE and gradients

def test_criterion_6_gae_and_gradients():
    from test_ppo import gradient_check_minibatches

    adv, _ = compute_gae([1.0, 1.0], [0.5, 0.5], [False, True], 0.0, 0.99, 0.95)
    gae_err = max(abs(adv[0] - 1.46525), abs(adv[1] - 0.5))
    worst = gradient_check_minibatches(20)
    ok = gae_err <= 1e-10 and worst < 1e-4
    record(6, ok, f"GAE hand example error {gae_err:.1e}, worst gradient relative error {worst:.1e} over 20 minibatches")
    assert ok


# ---------------------------------------------------------------- 7: hybrid A* soundness

def test_criterion_7_astar_soundness():
    from test_planner import astar_soundness_results

    res = astar_soundness_results(50)
    agree = sum(r == f for r, f, _ in res)
    clean = sum(c for _, _, c in res)
    p = hybrid_astar(GridMap(0.1, 50, 50), Pose2(1.0, 2.5, 0.0), Pose2(4.0, 2.5, 0.0))
    excess = p.cost / 3.0 - 1.0
    ok = agree == 50 and clean == 50 and 0 <= excess <= 0.05
    record(7, ok, f"existence agrees with BFS on {agree}/50 maps ({sum(r for r, _, _ in res)} reachable), "
                  f"{clean}/50 collision-free, empty-map cost {100 * excess:.1f}% above Euclidean")
    assert ok


# ---------------------------------------------------------------- 8: determinism

def test_criterion_8_determinism(tmp_path):
    from test_cli import eval_determinism, nav_determinism, train_determinism

    res = {"train": train_determinism(tmp_path), "nav": nav_determinism(tmp_path, "fig7"),
           "eval": eval_determinism(tmp_path)}
    ok = all(res.values())
    record(8, ok, ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in res.items()))
    assert ok


# ---------------------------------------------------------------- 9: unit examples

UNIT_MODULES = ("test_world.py", "test_physics.py", "test_planner.py", "test_pushenv.py", "test_ppo.py",
                "test_navexec.py", "test_cli.py")


@pytest.mark.slow
def test_criterion_9_unit_examples():
    tests = [str(ROOT / "tests" / m) for m in UNIT_MODULES]
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *tests],
                          cwd=ROOT, capture_output=True, text=True)
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    ok = proc.returncode == 0
    record(9, ok, f"unit example suites: {tail}")
    assert ok, proc.stdout[-3000:]
