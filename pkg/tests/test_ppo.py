import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pushnav.ppo import (EVAL_GRID, IN_DISTRIBUTION, Adam, ActorCritic, CheckpointError, NonFiniteError,
                         PolicyActor, RandomActor, ScriptedActor, TrainConfig, collect_rollouts, compute_gae,
                         evaluate_policy, gaussian_logp, load_checkpoint, ppo_loss_and_grads, ppo_update, read_curve, train)
from pushnav.pushenv import Curriculum, EnvConfig, VecPushEnv

CFG = EnvConfig()


# ---------------------------------------------------------------- GAE

def test_gae_hand_recursion():
    adv, ret = compute_gae([1.0, 1.0], [0.5, 0.5], [False, True], 0.0, 0.99, 0.95)
    assert abs(adv[0] - 1.46525) < 1e-10
    assert abs(adv[1] - 0.5) < 1e-10
    np.testing.assert_allclose(ret, adv + 0.5, atol=1e-15)


def test_gae_hand_deltas():
    # with lam = 0 the advantages are the one-step TD errors
    adv, _ = compute_gae([1.0, 1.0], [0.5, 0.5], [False, True], 0.0, 0.99, 0.0)
    assert abs(adv[0] - 0.995) < 1e-10
    assert abs(adv[1] - 0.5) < 1e-10


def test_gae_myopic():
    rng = np.random.default_rng(0)
    r, v = rng.normal(size=10), rng.normal(size=10)
    d = rng.random(10) < 0.3
    adv, _ = compute_gae(r, v, d, 3.0, 0.0, 0.95)
    np.testing.assert_allclose(adv, r - v, atol=1e-15)


def test_gae_no_bootstrap_leak():
    r = np.array([0.3, -0.2, 1.0])
    d = np.array([False, True, False])
    v1 = np.array([0.1, 0.2, 0.3])
    v2 = np.array([0.1, 0.2, 99.0])
    a1, _ = compute_gae(r, v1, d, 5.0, 0.99, 0.95)
    a2, _ = compute_gae(r, v2, d, -7.0, 0.99, 0.95)
    np.testing.assert_array_equal(a1[:2], a2[:2])


def test_gae_bootstrap_added_on_ended_step():
    adv, _ = compute_gae([1.0], [0.0], [True], 0.0, 0.99, 0.95, bootstrap=[2.0])
    assert adv[0] == 3.0


@settings(max_examples=200)
@given(st.integers(1, 3), st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       st.lists(st.floats(-5, 5), min_size=3, max_size=3), st.floats(0.0, 1.0))
def test_gae_matches_monte_carlo(length, rewards, values, gamma):
    r = np.array(rewards[:length])
    v = np.array(values[:length])
    d = np.zeros(length, dtype=bool)
    d[-1] = True
    adv, _ = compute_gae(r, v, d, 123.0, gamma, 1.0)
    for t in range(length):
        mc = sum(gamma ** k * r[t + k] for k in range(length - t))
        assert abs(adv[t] - (mc - v[t])) < 1e-10


def test_gae_batched_matches_columns():
    rng = np.random.default_rng(1)
    r, v = rng.normal(size=(6, 3)), rng.normal(size=(6, 3))
    d = rng.random((6, 3)) < 0.3
    last = rng.normal(size=3)
    adv, _ = compute_gae(r, v, d, last, 0.99, 0.95)
    for j in range(3):
        a, _ = compute_gae(r[:, j], v[:, j], d[:, j], last[j], 0.99, 0.95)
        np.testing.assert_allclose(adv[:, j], a, atol=1e-14)


# ---------------------------------------------------------------- loss and gradients

def toy_policy(obs_dim=3, hidden=(4,), seed=0):
    p = ActorCritic(obs_dim, 2, hidden, seed=seed, init_log_std=-0.3, frame_stack=1).astype(np.float64)
    p.normalize = False
    rng = np.random.default_rng(seed + 100)
    # move away from the tiny output init so every weight carries signal
    p.set_params([a + rng.normal(scale=0.3, size=a.shape) for a in p.params()])
    return p


def batch(policy, rng, n=8):
    obs = rng.normal(size=(n, policy.obs_dim))
    mu = policy.mean(obs)
    act = mu + np.exp(policy.log_std) * rng.normal(size=mu.shape)
    logp = gaussian_logp(act, mu, policy.log_std)
    # some samples sit well inside the trust region, some far outside it (clipped)
    shift = rng.choice([-0.6, 0.0, 0.6], size=n) + rng.normal(scale=0.02, size=n)
    adv = rng.normal(size=n)
    ret = rng.normal(size=n)
    return obs, act, logp + shift, adv, ret


def finite_difference_check(policy, data, clip=0.2, vf=0.5, ent=0.01, eps=1e-6):
    obs, act, old, adv, ret = data
    _, grads, _ = ppo_loss_and_grads(policy, obs, act, old, adv, ret, clip, vf, ent)
    params = policy.params()
    worst = 0.0
    for k, p in enumerate(params):
        for idx in itertools.product(*[range(s) for s in p.shape]):
            orig = p[idx]
            p[idx] = orig + eps
            policy.set_params(params)
            lp = ppo_loss_and_grads(policy, obs, act, old, adv, ret, clip, vf, ent)[0]
            p[idx] = orig - eps
            policy.set_params(params)
            lm = ppo_loss_and_grads(policy, obs, act, old, adv, ret, clip, vf, ent)[0]
            p[idx] = orig
            policy.set_params(params)
            fd = (lp - lm) / (2 * eps)
            an = grads[k][idx]
            rel = abs(an - fd) / max(abs(an) + abs(fd), 1e-6)
            worst = max(worst, rel)
    return worst


def test_gradient_toy_net_finite_differences():
    # one input, one hidden unit, one action: actor has exactly four weights
    p = ActorCritic(1, 1, (1,), seed=3, init_log_std=-0.2, frame_stack=1).astype(np.float64)
    p.normalize = False
    rng = np.random.default_rng(3)
    p.set_params([a + rng.normal(scale=0.5, size=a.shape) for a in p.params()])
    assert sum(a.size for a in p.params()[:4]) == 4
    assert finite_difference_check(p, batch(p, rng)) < 1e-4


def gradient_check_minibatches(count=20):
    rng = np.random.default_rng(11)
    worst = 0.0
    for i in range(count):
        p = toy_policy(seed=i)
        worst = max(worst, finite_difference_check(p, batch(p, rng)))
    return worst


def test_gradients_random_minibatches():
    assert gradient_check_minibatches(20) < 1e-4


def test_zero_advantage_no_policy_gradient():
    p = toy_policy()
    obs, act, old, _, ret = batch(p, np.random.default_rng(2))
    _, grads, _ = ppo_loss_and_grads(p, obs, act, old, np.zeros(8), ret, 0.2, 0.0, 0.0)
    n_actor = 2 * len(p.actor) + 1
    assert all(np.all(g == 0.0) for g in grads[:n_actor])
    _, grads, _ = ppo_loss_and_grads(p, obs, act, old, np.zeros(8), ret, 0.2, 0.5, 0.01)
    # only the entropy bonus touches the log-std, uniformly
    np.testing.assert_allclose(grads[n_actor - 1], -0.01)
    assert any(np.any(g != 0.0) for g in grads[n_actor:])


def test_identity_ratio_surrogate():
    p = toy_policy()
    rng = np.random.default_rng(4)
    obs, act, _, adv, ret = batch(p, rng)
    logp = gaussian_logp(act, p.mean(obs), p.log_std)
    _, _, st = ppo_loss_and_grads(p, obs, act, logp, adv, ret, 0.2, 0.5, 0.0)
    assert st["pg_loss"] == pytest.approx(-adv.mean(), abs=1e-12)
    assert st["clip_frac"] == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=8, max_size=8), st.lists(st.floats(-3, 3), min_size=8, max_size=8))
def test_clipped_surrogate_bound(log_ratio, advs):
    ratio = np.exp(np.array(log_ratio))
    a = np.array(advs)
    surr = np.minimum(ratio * a, np.clip(ratio, 0.8, 1.2) * a)
    assert np.all(surr <= ratio * a + 1e-12)
    assert np.all(surr <= np.clip(ratio, 0.8, 1.2) * a + 1e-12)
    # and the loss function uses exactly this surrogate
    p = ActorCritic(1, 1, (2,), frame_stack=1).astype(np.float64)
    p.normalize = False
    obs = np.zeros((8, 1))
    act = np.zeros((8, 1))
    logp = gaussian_logp(act, p.mean(obs), p.log_std)
    _, _, stt = ppo_loss_and_grads(p, obs, act, logp - np.array(log_ratio), a, np.zeros(8), 0.2, 0.0, 0.0)
    assert stt["pg_loss"] == pytest.approx(-surr.mean(), abs=1e-9)


# ---------------------------------------------------------------- rollouts

def small_setup(n=2, seed=0):
    env = VecPushEnv(CFG, n, seed, Curriculum(index=1))
    pol = ActorCritic(CFG.policy_input_dim, 6, (16, 16), seed=seed, init_log_std=-0.5)
    return env, pol, env.reset_all()


def test_rollout_counts():
    env, pol, obs = small_setup()
    buf, _ = collect_rollouts(env, pol, 3, np.random.default_rng(0), obs)
    assert len(buf) == 6
    assert buf.obs.shape == (3, 2, CFG.policy_input_dim)


def test_rollouts_deterministic():
    bufs = []
    for _ in range(2):
        env, pol, obs = small_setup(3, seed=5)
        bufs.append(collect_rollouts(env, pol, 20, np.random.default_rng(7), obs)[0])
    a, b = bufs
    for f in ("obs", "actions", "logp", "values", "rewards", "dones", "bootstrap", "terms"):
        assert np.array_equal(getattr(a, f), getattr(b, f)), f


def test_zero_policy_replay():
    env, pol, obs = small_setup(2, seed=1)
    pol.actor[-1][0][:] = 0.0
    pol.actor[-1][1][:] = 0.0
    pol.log_std[:] = -4.0
    buf, _ = collect_rollouts(env, pol, 30, np.random.default_rng(1), obs)
    # independent replay of the recorded actions on a fresh environment
    env2 = VecPushEnv(CFG, 2, 1, Curriculum(index=1))
    env2.reset_all()
    for t in range(30):
        _, rew, _, info = env2.step(buf.actions[t])
        assert np.array_equal(rew, buf.rewards[t])
        stage1 = ~info["stage"]
        assert np.all(info["terms"][stage1, 2] == -0.1)
        assert np.all(info["terms"][stage1, 4:] == 0.0)
    assert np.all(np.abs(buf.actions) < 0.1)


def test_nonfinite_observation_aborts():
    env, pol, obs = small_setup()
    obs[0, 3] = np.nan
    with pytest.raises(NonFiniteError):
        collect_rollouts(env, pol, 2, np.random.default_rng(0), obs)


def test_nonfinite_loss_skips_and_halves_lr():
    env, pol, obs = small_setup()
    buf, _ = collect_rollouts(env, pol, 4, np.random.default_rng(0), obs)
    adv = np.full(buf.rewards.shape, np.nan)
    before = [p.copy() for p in pol.params()]
    opt = Adam(pol.params(), 1e-3)
    ppo_update(pol, opt, buf, adv, adv, TrainConfig(epochs=1, minibatches=2), np.random.default_rng(0))
    assert opt.lr == pytest.approx(1e-3 / 4)
    assert all(np.array_equal(a, b) for a, b in zip(before, pol.params()))


# ---------------------------------------------------------------- evaluation

def test_scripted_easiest_goal():
    res = evaluate_policy(ScriptedActor(), CFG, 10, IN_DISTRIBUTION, targets=((0.85, 0.0),))
    assert res.success_rate == 1.0


def test_random_policy_fails():
    res = evaluate_policy(RandomActor(0), CFG, 50, IN_DISTRIBUTION)
    # 2 successes out of 50 is already significant against a zero rate at the 5% level for p <= 0.001
    assert res.success_rate <= 2 / 50


def test_eval_grid_rows():
    names = [n for n, _ in EVAL_GRID]
    specs = [s for _, s in EVAL_GRID]
    assert len(EVAL_GRID) == 7
    assert names[-1] == "Cylinder"
    assert specs[-1].shape == "cylinder" and specs[-1].dims == (0.35, 0.55)
    sizes = [s.dims for s in specs[:3]]
    assert sizes == [(0.60, 0.60, 0.60), (0.45, 0.50, 0.50), (0.50, 0.70, 0.50)]
    assert all((s.mass, s.mu) == (1.5, 0.7) for s in specs[:3])
    assert len({(s.mass, s.mu) for s in specs[3:6]}) == 3
    assert evaluate_policy.__defaults__[1] == 50


# ---------------------------------------------------------------- training

def tiny_train(tmp_path, mode="two_stage", steps=3 * 4 * 10, tag="a", seed=0):
    cfg = TrainConfig(n_envs=4, steps_per_env=10, total_steps=steps, reward_mode=mode, seed=seed, hidden=(16, 16))
    log = tmp_path / f"curve_{tag}.tsv"
    ck = tmp_path / f"policy_{tag}.ckpt"
    res = train(cfg, CFG, log, ck)
    return res, log, ck


def test_train_zero_budget(tmp_path):
    res, log, ck = tiny_train(tmp_path, steps=0)
    assert res.curve == []
    assert ck.exists()
    assert read_curve(log) == []


def test_train_deterministic(tmp_path):
    r1, l1, c1 = tiny_train(tmp_path, tag="a")
    r2, l2, c2 = tiny_train(tmp_path, tag="b")
    assert len(r1.curve) == 3
    assert l1.read_bytes() == l2.read_bytes()
    assert c1.read_bytes() == c2.read_bytes()


@pytest.mark.parametrize("mode", ["two_stage", "baseline1_all_on", "baseline2_task_only"])
def test_train_modes_gating(tmp_path, mode):
    res, log, _ = tiny_train(tmp_path, mode=mode, tag=mode)
    assert res.gating_violations == 0
    assert all(r.reward_mode == mode for r in read_curve(log))


def test_baseline_modes_gating_in_env():
    for mode in ("baseline1_all_on", "baseline2_task_only"):
        cfg = dataclasses.replace(CFG, reward_mode=mode)
        env = VecPushEnv(cfg, 4, 0)
        env.reset_all()
        _, _, _, info = env.step(np.zeros((4, 6)))
        t = info["terms"]
        assert np.all(t[:, 4:6] > 0)  # task terms live from the first step
        if mode == "baseline1_all_on":
            assert np.all(t[:, 0] > 0)
        else:
            assert np.all(t[:, :4] == 0)


def test_checkpoint_round_trip(tmp_path):
    res, _, ck = tiny_train(tmp_path)
    loaded = load_checkpoint(ck, CFG.policy_input_dim, CFG.frame_stack)
    orig = res.policy
    r1 = evaluate_policy(PolicyActor(orig), CFG, 6, IN_DISTRIBUTION, seed=3)
    r2 = evaluate_policy(PolicyActor(loaded), CFG, 6, IN_DISTRIBUTION, seed=3)
    assert r1.success_rate == r2.success_rate
    assert np.array_equal(r1.mean_terms, r2.mean_terms)
    for a, b in zip(orig.params(), loaded.params()):
        assert np.array_equal(a, b)


def test_checkpoint_rejects_wrong_layout(tmp_path):
    _, _, ck = tiny_train(tmp_path, steps=0)
    with pytest.raises(CheckpointError):
        load_checkpoint(ck, expect_obs_dim=CFG.policy_input_dim + 3)
    data = bytearray(ck.read_bytes())
    data[0:8] = b"XXXXXXXX"
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(data))
    with pytest.raises(CheckpointError):
        load_checkpoint(bad)


def test_log_std_clamped_and_weights_finite(tmp_path):
    res, _, _ = tiny_train(tmp_path)
    p = res.policy
    assert np.all(p.log_std >= -4) and np.all(p.log_std <= 1)
    assert all(np.all(np.isfinite(a)) for a in p.params())
    assert all(a.dtype == np.float32 for a in p.params())
