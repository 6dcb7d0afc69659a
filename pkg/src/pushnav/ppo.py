"""Small numpy PPO: tanh MLP actor-critic with hand-written backprop and Adam."""

from __future__ import annotations

import hashlib
import io
import math
import struct
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .pushenv import (CAUSES, OBS_LAYOUT, SUCCESS, Curriculum, EnvConfig, ObjectSpec, VecPushEnv)

LOG_STD_MIN, LOG_STD_MAX = -4.0, 1.0
LOG_2PI = math.log(2 * math.pi)
MAGIC = b"PNAVCKPT"
VERSION = 2


@dataclass(frozen=True)
class TrainConfig:
    n_envs: int = 64
    steps_per_env: int = 100
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    epochs: int = 5
    minibatches: int = 4
    lr: float = 3e-4
    ent_coef: float = 0.005
    vf_coef: float = 0.5
    max_grad_norm: float = 1.0
    total_steps: int = 3_000_000
    reward_mode: str = "two_stage"
    seed: int = 0
    hidden: tuple = (128, 128)
    init_log_std: float = -0.5
    curriculum: bool = True
    curriculum_window: int = 200
    curriculum_threshold: float = 0.9
    normalize_obs: bool = True

    def __post_init__(self):
        for name in ("n_envs", "steps_per_env", "epochs", "minibatches"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("lr", "clip", "max_grad_norm"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (0 <= self.gamma <= 1 and 0 <= self.lam <= 1):
            raise ValueError("gamma and lam must lie in [0, 1]")
        if self.total_steps < 0:
            raise ValueError("total_steps must be non-negative")


class NonFiniteError(RuntimeError):
    pass


# ---------------------------------------------------------------- network

def init_mlp(rng: np.random.Generator, sizes, out_gain: float = 1.0, dtype=np.float32) -> list:
    """Layer list [(W, b), ...] with scaled orthogonal-ish (Gaussian) init."""
    layers = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = out_gain if i == len(sizes) - 2 else math.sqrt(2.0)
        w = rng.normal(0.0, 1.0, (a, b))
        q, _ = np.linalg.qr(w if a >= b else w.T)
        w = (q if a >= b else q.T)[:a, :b] * gain
        layers.append([w.astype(dtype), np.zeros(b, dtype=dtype)])
    return layers


def mlp_forward(layers, x):
    """tanh hidden layers, linear output; returns (output, cache of activations)."""
    acts = [x]
    h = x
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        h = np.tanh(z) if i < len(layers) - 1 else z
        acts.append(h)
    return h, acts


def mlp_backward(layers, acts, dout):
    grads = [None] * len(layers)
    g = dout
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        if i < len(layers) - 1:
            g = g * (1.0 - acts[i + 1] ** 2)
        grads[i] = [acts[i].T @ g, g.sum(axis=0)]
        if i > 0:
            g = g @ w.T
    return grads


class RunningNorm:
    """Per-feature running mean/variance (parallel Welford merge)."""

    def __init__(self, dim: int):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 1e-4

    def update(self, x: np.ndarray) -> None:
        x = x.reshape(-1, self.mean.shape[0])
        bm, bv, bc = x.mean(axis=0), x.var(axis=0), x.shape[0]
        delta = bm - self.mean
        tot = self.count + bc
        self.mean = self.mean + delta * bc / tot
        self.var = (self.var * self.count + bv * bc + delta ** 2 * self.count * bc / tot) / tot
        self.count = tot

    def __call__(self, x):
        return np.clip((x - self.mean) / np.sqrt(self.var + 1e-8), -10.0, 10.0)


class ActorCritic:
    """Diagonal-Gaussian policy with a state-independent log-std, plus a value head."""

    def __init__(self, obs_dim: int, act_dim: int = 6, hidden=(128, 128), seed: int = 0, init_log_std: float = -0.5,
                 frame_stack: int = 5, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = tuple(hidden)
        self.frame_stack = frame_stack
        self.actor = init_mlp(rng, (obs_dim, *hidden, act_dim), 0.01, dtype)
        self.critic = init_mlp(rng, (obs_dim, *hidden, 1), 1.0, dtype)
        self.log_std = np.full(act_dim, init_log_std, dtype=dtype)
        self.norm = RunningNorm(obs_dim)
        self.normalize = True

    # parameters as a flat ordered list of arrays (shared by Adam, checkpoints, tests)
    def params(self) -> list:
        out = []
        for w, b in self.actor:
            out += [w, b]
        out.append(self.log_std)
        for w, b in self.critic:
            out += [w, b]
        return out

    def set_params(self, arrays) -> None:
        arrays = list(arrays)
        k = 0
        for layer in self.actor:
            layer[0], layer[1] = arrays[k], arrays[k + 1]
            k += 2
        self.log_std = arrays[k]
        k += 1
        for layer in self.critic:
            layer[0], layer[1] = arrays[k], arrays[k + 1]
            k += 2

    def astype(self, dtype) -> ActorCritic:
        other = object.__new__(ActorCritic)
        other.__dict__.update(self.__dict__)
        other.actor = [[w.astype(dtype), b.astype(dtype)] for w, b in self.actor]
        other.critic = [[w.astype(dtype), b.astype(dtype)] for w, b in self.critic]
        other.log_std = self.log_std.astype(dtype)
        return other

    def prep(self, obs):
        x = self.norm(obs) if self.normalize else obs
        return x.astype(self.log_std.dtype)

    def mean(self, obs):
        return mlp_forward(self.actor, self.prep(obs))[0]

    def value(self, obs):
        return mlp_forward(self.critic, self.prep(obs))[0][:, 0]

    def clamped_log_std(self):
        return np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)

    def sample(self, obs, rng: np.random.Generator):
        mu = self.mean(obs).astype(np.float64)
        ls = self.clamped_log_std().astype(np.float64)
        a = mu + np.exp(ls) * rng.standard_normal(mu.shape)
        return a, gaussian_logp(a, mu, ls)

    def act_deterministic(self, obs):
        return self.mean(obs).astype(np.float64)


def gaussian_logp(a, mu, log_std):
    z = (a - mu) / np.exp(log_std)
    return np.sum(-0.5 * z ** 2 - log_std - 0.5 * LOG_2PI, axis=-1)


# ---------------------------------------------------------------- loss and gradients

def ppo_loss_and_grads(policy: ActorCritic, obs, actions, old_logp, adv, returns, clip: float, vf_coef: float,
                       ent_coef: float):
    """Clipped-surrogate loss and analytic gradients (same order as ``policy.params()``)."""
    x = policy.prep(obs)
    n = x.shape[0]
    dt = policy.log_std.dtype
    mu, a_acts = mlp_forward(policy.actor, x)
    v, c_acts = mlp_forward(policy.critic, x)
    v = v[:, 0]
    ls = policy.log_std
    std = np.exp(ls)
    z = (actions.astype(dt) - mu) / std
    logp = np.sum(-0.5 * z ** 2 - ls - 0.5 * LOG_2PI, axis=1)
    ratio = np.exp(logp - old_logp.astype(dt))
    adv = adv.astype(dt)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - clip, 1 + clip) * adv
    surr = np.minimum(unclipped, clipped)
    pg_loss = -surr.mean()
    v_err = v - returns.astype(dt)
    v_loss = 0.5 * np.mean(v_err ** 2)
    entropy = np.sum(ls + 0.5 * (LOG_2PI + 1.0))
    loss = pg_loss + vf_coef * v_loss - ent_coef * entropy

    # d pg_loss / d logp: only where the unclipped branch is the active minimum
    active = unclipped <= clipped
    dlogp = np.where(active, -ratio * adv, 0.0) / n
    dmu = dlogp[:, None] * z / std
    dls = np.sum(dlogp[:, None] * (z ** 2 - 1.0), axis=0) - ent_coef
    a_grads = mlp_backward(policy.actor, a_acts, dmu.astype(dt))
    dv = (vf_coef * v_err / n)[:, None].astype(dt)
    c_grads = mlp_backward(policy.critic, c_acts, dv)
    grads = []
    for g in a_grads:
        grads += g
    grads.append(dls.astype(dt))
    for g in c_grads:
        grads += g
    approx_kl = float(np.mean(old_logp - logp))
    clip_frac = float(np.mean(np.abs(ratio - 1) > clip))
    stats = {"loss": float(loss), "pg_loss": float(pg_loss), "v_loss": float(v_loss), "entropy": float(entropy),
             "approx_kl": approx_kl, "clip_frac": clip_frac}
    return loss, grads, stats


class Adam:
    def __init__(self, params, lr: float, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        out = []
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            upd = self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)
            out.append((p - upd).astype(p.dtype))
        return out


# ---------------------------------------------------------------- rollouts

@dataclass
class RolloutBuffer:
    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    bootstrap: np.ndarray  # discounted value added for truncated / successful endings
    last_values: np.ndarray
    task_rewards: np.ndarray
    terms: np.ndarray
    stages: np.ndarray
    finished: list = field(default_factory=list)  # (cause, goal_index) in completion order

    def __len__(self) -> int:
        return self.rewards.size


def collect_rollouts(env: VecPushEnv, policy: ActorCritic, steps: int, rng: np.random.Generator, obs: np.ndarray,
                     gamma: float = 0.99):
    """Step all environments ``steps`` times; returns (buffer, next observation)."""
    n = env.n
    d = obs.shape[1]
    buf = RolloutBuffer(np.zeros((steps, n, d)), np.zeros((steps, n, 6)), np.zeros((steps, n)), np.zeros((steps, n)),
                        np.zeros((steps, n)), np.zeros((steps, n), dtype=bool), np.zeros((steps, n)), np.zeros(n),
                        np.zeros((steps, n)), np.zeros((steps, n, 7)), np.zeros((steps, n), dtype=bool))
    for t in range(steps):
        if not np.all(np.isfinite(obs)):
            bad = np.argwhere(~np.isfinite(obs))
            raise NonFiniteError(f"non-finite observation at step {t}, entries {bad[:5].tolist()}")
        a, logp = policy.sample(obs, rng)
        buf.obs[t] = obs
        buf.actions[t] = a
        buf.logp[t] = logp
        buf.values[t] = policy.value(obs)
        obs, rew, dones, info = env.step(a)
        buf.rewards[t] = rew
        buf.dones[t] = dones
        buf.task_rewards[t] = info["task_reward"]
        buf.terms[t] = info["terms"]
        buf.stages[t] = info["stage"]
        if dones.any():
            cause = info["cause"]
            keep = dones & ((cause == SUCCESS) | (cause == CAUSES.index("timeout")))
            if keep.any():
                buf.bootstrap[t, keep] = gamma * policy.value(info["terminal_obs"][keep])
            for i in np.nonzero(dones)[0]:
                buf.finished.append((int(cause[i]), int(info["goal_index"][i])))
    buf.last_values = policy.value(obs)
    return buf, obs


def compute_gae(rewards, values, dones, last_values, gamma: float, lam: float, bootstrap=None):
    """GAE over (T,) or (T, N) arrays; ``bootstrap`` adds a terminal value estimate to ended steps."""
    rewards = np.asarray(rewards, dtype=float)
    single = rewards.ndim == 1
    r = np.atleast_2d(rewards.T).T
    values = np.atleast_2d(np.asarray(values, dtype=float).T).T
    dones = np.atleast_2d(np.asarray(dones, dtype=bool).T).T
    if bootstrap is not None:
        r = r + np.atleast_2d(np.asarray(bootstrap, dtype=float).T).T
    adv = np.zeros_like(r)
    last = np.zeros(r.shape[1])
    next_v = np.atleast_1d(np.asarray(last_values, dtype=float))
    for t in range(r.shape[0] - 1, -1, -1):
        nonterm = 1.0 - dones[t]
        delta = r[t] + gamma * next_v * nonterm - values[t]
        last = delta + gamma * lam * nonterm * last
        adv[t] = last
        next_v = values[t]
    ret = adv + values
    if single:
        return adv[:, 0], ret[:, 0]
    return adv, ret


def ppo_update(policy: ActorCritic, opt: Adam, buf: RolloutBuffer, adv: np.ndarray, ret: np.ndarray,
               cfg: TrainConfig, rng: np.random.Generator) -> dict:
    n = adv.size
    obs = buf.obs.reshape(n, -1)
    act = buf.actions.reshape(n, -1)
    old = buf.logp.reshape(n)
    a = adv.reshape(n)
    a = (a - a.mean()) / (a.std() + 1e-8)
    r = ret.reshape(n)
    mb = n // cfg.minibatches
    stats = []
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for k in range(cfg.minibatches):
            idx = perm[k * mb:(k + 1) * mb]
            loss, grads, st = ppo_loss_and_grads(policy, obs[idx], act[idx], old[idx], a[idx], r[idx], cfg.clip,
                                                 cfg.vf_coef, cfg.ent_coef)
            gnorm = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads))
            if not (math.isfinite(loss) and math.isfinite(gnorm)):
                opt.lr *= 0.5
                st["skipped"] = True
                stats.append(st)
                continue
            if gnorm > cfg.max_grad_norm:
                grads = [g * (cfg.max_grad_norm / gnorm) for g in grads]
            policy.set_params(opt.step(policy.params(), grads))
            policy.log_std = np.clip(policy.log_std, LOG_STD_MIN, LOG_STD_MAX)
            st["grad_norm"] = gnorm
            stats.append(st)
    keys = ("loss", "pg_loss", "v_loss", "entropy", "approx_kl", "clip_frac")
    return {k: float(np.mean([s[k] for s in stats])) for k in keys}


# ---------------------------------------------------------------- checkpoints

def layout_hash(obs_dim: int, frame_stack: int) -> int:
    text = repr((OBS_LAYOUT, obs_dim, frame_stack)).encode()
    return int.from_bytes(hashlib.sha256(text).digest()[:8], "little")


def save_checkpoint(path, policy: ActorCritic, meta: dict | None = None) -> None:
    sizes = (policy.obs_dim, *policy.hidden, policy.act_dim)
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(sizes)))
    buf.write(struct.pack(f"<{len(sizes)}I", *sizes))
    buf.write(struct.pack("<IQ", policy.frame_stack, layout_hash(policy.obs_dim // policy.frame_stack,
                                                                 policy.frame_stack)))
    for arr in policy.params():
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    # normalizer statistics are kept in double precision so reloads are bit-exact
    for arr in (policy.norm.mean, policy.norm.var, np.array([policy.norm.count])):
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


class CheckpointError(ValueError):
    pass


def load_checkpoint(path, expect_obs_dim: int | None = None, expect_frame_stack: int | None = None) -> ActorCritic:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointError("not a policy checkpoint")
    off = len(MAGIC)
    version, n_sizes = struct.unpack_from("<II", data, off)
    off += 8
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    sizes = struct.unpack_from(f"<{n_sizes}I", data, off)
    off += 4 * n_sizes
    k, lhash = struct.unpack_from("<IQ", data, off)
    off += 12
    obs_dim, act_dim, hidden = sizes[0], sizes[-1], sizes[1:-1]
    if lhash != layout_hash(obs_dim // k, k):
        raise CheckpointError("observation layout hash mismatch")
    if expect_obs_dim is not None and obs_dim != expect_obs_dim:
        raise CheckpointError(f"checkpoint expects {obs_dim} inputs, environment provides {expect_obs_dim}")
    if expect_frame_stack is not None and k != expect_frame_stack:
        raise CheckpointError("frame stack mismatch")
    policy = ActorCritic(obs_dim, act_dim, hidden, frame_stack=k)
    arrays = []
    n_par = len(policy.params())
    for i, p in enumerate(policy.params() + [policy.norm.mean, policy.norm.var, np.zeros(1)]):
        dt, width = ("<f4", 4) if i < n_par else ("<f8", 8)
        cnt = p.size
        if off + width * cnt > len(data):
            raise CheckpointError("truncated checkpoint")
        arr = np.frombuffer(data, dtype=dt, count=cnt, offset=off).reshape(p.shape)
        off += width * cnt
        arrays.append(arr)
    if off != len(data):
        raise CheckpointError("trailing bytes in checkpoint")
    policy.set_params([a.astype(np.float32) for a in arrays[:n_par]])
    policy.norm.mean = arrays[n_par].astype(np.float64)
    policy.norm.var = arrays[n_par + 1].astype(np.float64)
    policy.norm.count = float(arrays[n_par + 2][0])
    return policy


# ---------------------------------------------------------------- training

@dataclass
class CurveRow:
    iteration: int
    env_steps: int
    mean_reward: float
    success_rate: float
    curriculum_index: int
    reward_mode: str
    task_reward: float = 0.0
    episodes: int = 0

    HEADER = ("iteration", "env_steps", "mean_reward", "success_rate", "curriculum_index", "reward_mode",
              "task_reward", "episodes")

    def to_line(self) -> str:
        return "\t".join([str(self.iteration), str(self.env_steps), f"{self.mean_reward:.6f}",
                          f"{self.success_rate:.6f}", str(self.curriculum_index), self.reward_mode,
                          f"{self.task_reward:.6f}", str(self.episodes)])


@dataclass
class TrainResult:
    policy: ActorCritic
    curve: list
    recent_success: list
    gating_violations: int = 0
    steps_audited: int = 0
    reward_range: tuple = (math.inf, -math.inf)


def audit_gating(buf: RolloutBuffer, mode: str) -> tuple[int, float, float]:
    """Count reward-gating violations in a rollout; returns (violations, min total, max total)."""
    terms = buf.terms
    total = buf.rewards
    bad = (total < -5.1) | (total > 2.5)
    if mode == "two_stage":
        s = buf.stages
        bad |= ~s & np.any(terms[..., 4:7] != 0, axis=-1)
        bad |= s & np.any(terms[..., [0, 3]] != 0, axis=-1)
    elif mode == "baseline2_task_only":
        bad |= np.any(terms[..., 0:4] != 0, axis=-1)
    return int(bad.sum()), float(total.min()), float(total.max())


def train(cfg: TrainConfig, env_cfg: EnvConfig | None = None, log_path=None, checkpoint_path=None,
          progress=None) -> TrainResult:
    env_cfg = replace(env_cfg or EnvConfig(), reward_mode=cfg.reward_mode)
    curriculum = Curriculum(1, cfg.curriculum_window, cfg.curriculum_threshold, enabled=cfg.curriculum)
    env = VecPushEnv(env_cfg, cfg.n_envs, cfg.seed, curriculum)
    policy = ActorCritic(env_cfg.policy_input_dim, 6, cfg.hidden, cfg.seed + 1, cfg.init_log_std,
                         env_cfg.frame_stack)
    policy.normalize = cfg.normalize_obs
    opt = Adam(policy.params(), cfg.lr)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(cfg.n_envs + 1)[-1])
    obs = env.reset_all()
    if cfg.normalize_obs:
        policy.norm.update(obs)
    curve = []
    recent = deque(maxlen=100)
    result = TrainResult(policy, curve, [])
    log = None
    if log_path is not None:
        log = open(log_path, "w")
        log.write("\t".join(CurveRow.HEADER) + "\n")
    steps = 0
    it = 0
    per_iter = cfg.n_envs * cfg.steps_per_env
    try:
        while steps + per_iter <= cfg.total_steps:
            buf, obs = collect_rollouts(env, policy, cfg.steps_per_env, rng, obs, cfg.gamma)
            steps += per_iter
            it += 1
            adv, ret = compute_gae(buf.rewards, buf.values, buf.dones, buf.last_values, cfg.gamma, cfg.lam,
                                   buf.bootstrap)
            ppo_update(policy, opt, buf, adv, ret, cfg, rng)
            if cfg.normalize_obs:
                policy.norm.update(buf.obs)
            v, lo, hi = audit_gating(buf, cfg.reward_mode)
            result.gating_violations += v
            result.steps_audited += len(buf)
            result.reward_range = (min(result.reward_range[0], lo), max(result.reward_range[1], hi))
            succ = [c == SUCCESS for c, _ in buf.finished]
            recent.extend(succ)
            curriculum.record(succ)
            row = CurveRow(it, steps, float(buf.rewards.mean()), float(np.mean(succ)) if succ else 0.0,
                           curriculum.index, cfg.reward_mode, float(buf.task_rewards.mean()), len(succ))
            curriculum.maybe_advance()
            curve.append(row)
            if log:
                log.write(row.to_line() + "\n")
                log.flush()
            if progress:
                progress(row)
    finally:
        if log:
            log.close()
    result.recent_success = list(recent)
    if checkpoint_path is not None:
        save_checkpoint(checkpoint_path, policy)
    return result


def read_curve(path) -> list:
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split("\t")
    rows = []
    for line in lines[1:]:
        f = dict(zip(header, line.split("\t")))
        rows.append(CurveRow(int(f["iteration"]), int(f["env_steps"]), float(f["mean_reward"]),
                             float(f["success_rate"]), int(f["curriculum_index"]), f["reward_mode"],
                             float(f.get("task_reward", 0.0)), int(f.get("episodes", 0))))
    return rows


# ---------------------------------------------------------------- evaluation

EVAL_GRID = (
    ("Cuboid", ObjectSpec("box", (0.60, 0.60, 0.60), 1.5, 0.7)),
    ("Cuboid", ObjectSpec("box", (0.45, 0.50, 0.50), 1.5, 0.7)),
    ("Cuboid", ObjectSpec("box", (0.50, 0.70, 0.50), 1.5, 0.7)),
    ("Cuboid", ObjectSpec("box", (0.50, 0.70, 0.55), 1.0, 0.5)),
    ("Cuboid", ObjectSpec("box", (0.50, 0.70, 0.55), 2.0, 0.7)),
    ("Cuboid", ObjectSpec("box", (0.50, 0.70, 0.55), 3.0, 1.0)),
    ("Cylinder", ObjectSpec("cylinder", (0.35, 0.55), 1.0, 0.5)),
)
IN_DISTRIBUTION = ObjectSpec("box", (0.50, 0.60, 0.55), 1.5, 0.7)
EVAL_TARGETS = ((0.65, 0.6), (0.65, -0.6))


@dataclass
class EvalResult:
    success_rate: float
    mean_length: float
    mean_final_dist: float
    causes: dict
    mean_terms: np.ndarray


class PolicyActor:
    """Adapter: deterministic action from the policy mean."""

    def __init__(self, policy: ActorCritic):
        self.policy = policy

    def begin(self, env: VecPushEnv) -> None:
        pass

    def __call__(self, env: VecPushEnv, obs: np.ndarray) -> np.ndarray:
        return self.policy.act_deterministic(obs)


class ScriptedActor:
    def begin(self, env: VecPushEnv) -> None:
        from .scripted import ScriptedPusher

        self.pusher = ScriptedPusher(env)

    def __call__(self, env: VecPushEnv, obs: np.ndarray) -> np.ndarray:
        return self.pusher.act()


class RandomActor:
    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def begin(self, env: VecPushEnv) -> None:
        pass

    def __call__(self, env: VecPushEnv, obs: np.ndarray) -> np.ndarray:
        return self.rng.uniform(-1.0, 1.0, (env.n, 6))


def rollout_episodes(env: VecPushEnv, actor) -> tuple:
    """Run every env from its current reset state until its first termination (no auto-reset)."""
    n = env.n
    actor.begin(env)
    causes = np.zeros(n, dtype=int)
    lengths = np.zeros(n, dtype=int)
    final_dist = np.zeros(n)
    finished = np.zeros(n, dtype=bool)
    term_sum = np.zeros((n, 7))
    saved = env.reset_env
    env.reset_env = lambda *a, **k: None
    obs = env.policy_obs()
    try:
        for _ in range(env.cfg.horizon):
            a = actor(env, obs)
            a = np.where(finished[:, None], 0.0, a)
            obs, _, dones, info = env.step(a)
            term_sum[~finished] += info["terms"][~finished]
            new = dones & ~finished
            causes[new] = info["cause"][new]
            lengths[new] = env.step_count[new]
            final_dist[new] = info["dist"][new]
            finished |= dones
            if finished.all():
                break
    finally:
        env.reset_env = saved
    return causes, lengths, final_dist, term_sum


def evaluate_policy(actor, env_cfg: EnvConfig | None = None, n_trials: int = 50, object_spec: ObjectSpec | None = None,
                    seed: int = 0, targets=EVAL_TARGETS) -> EvalResult:
    """Deterministic evaluation; fixed objects alternate between the given targets."""
    env_cfg = env_cfg or EnvConfig()
    env = VecPushEnv(env_cfg, n_trials, seed, Curriculum(enabled=False))
    for i in range(n_trials):
        if object_spec is None:
            env.reset_env(i, curriculum_index=3)
        else:
            env.reset_env(i, obj=object_spec, goal_xy=targets[i % len(targets)], curriculum_index=3,
                          action_gain=1.0)
    causes, lengths, dist, terms = rollout_episodes(env, actor)
    counts = {name: int(np.sum(causes == k)) for k, name in enumerate(CAUSES) if k}
    return EvalResult(float(np.mean(causes == SUCCESS)), float(lengths.mean()), float(dist.mean()), counts,
                      terms.mean(axis=0) / max(lengths.mean(), 1))
