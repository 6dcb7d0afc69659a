"""Goal-conditioned arm-pushing environment with the two-stage reward.

``VecPushEnv`` steps N independent episodes with numpy; ``PushEnv`` is the
single-episode view used by evaluation, navigation and tests. Frame A is
the arm base projected onto the ground (z = 0 is the floor).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import physics
from .physics import BOX, CYLINDER, ArmModel, RandomizationRanges
from .world import MovableObject, Pose6, wrap_angle

OBS_DIM = 25
OBS_LAYOUT = (
    ("A_p_obj", 3), ("A_eta_obj", 3), ("A_p_goal", 3), ("A_eta_goal", 3),
    ("A_p_ee", 3), ("A_eta_ee", 3), ("E_p_obj", 3), ("E_p_goal", 3), ("stage_flag", 1),
)
POS_SLOTS = np.r_[0:3, 6:9, 12:15, 18:24]
ANG_SLOTS = np.r_[3:6, 9:12, 15:18]

REWARD_MODES = ("two_stage", "baseline1_all_on", "baseline2_task_only")
CAUSES = ("running", "success", "out_of_region", "tipped", "timeout")
RUNNING, SUCCESS, OUT_OF_REGION, TIPPED, TIMEOUT = range(5)


@dataclass(frozen=True)
class EnvConfig:
    control_rate: float = 25.0
    horizon: int = 100
    action_scale: tuple = (0.4, 0.6, 0.25, 0.25, 0.05, 0.0)
    reward_weights: tuple = (1.0, 0.1, -0.1, -5.0, 0.2, 1.0, 0.2)
    zone_radius: float = 0.2
    success_dist: float = 0.1
    spawn: tuple = (0.55, 0.0)
    r1: float = 0.15
    r2: float = 0.5
    r3: float = 0.9
    r4: float = 1.2
    sector_half_angle: float = math.radians(60.0)
    min_goal_dist: float = 0.3
    size_lx: tuple = (0.45, 0.65)
    size_ly: tuple = (0.45, 0.65)
    size_lz: tuple = (0.50, 0.60)
    randomization: RandomizationRanges = RandomizationRanges()
    frame_stack: int = 5
    obs_noise: bool = True
    noise_pos: float = 0.005
    noise_ang: float = 0.01
    reward_mode: str = "two_stage"
    oracle: bool = False
    v_clamp: float = 1.0
    substep_len: float = 0.04
    max_substeps: int = 30
    limit_surface_c: float = 0.05
    mu_pusher: float = 0.5
    max_tilt: float = 0.52
    arm: ArmModel = field(default_factory=ArmModel)

    def __post_init__(self):
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        a = np.asarray(self.action_scale)
        if a.shape != (6,) or np.any(a < 0) or a[5] != 0:
            raise ValueError("action_scale must be 6 non-negative values with the last equal to 0")
        if self.zone_radius <= 0:
            raise ValueError("zone_radius must be positive")
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}")

    @property
    def dt(self) -> float:
        return 1.0 / self.control_rate

    @property
    def obs_dim(self) -> int:
        return OBS_DIM + (3 if self.oracle else 0)

    @property
    def policy_input_dim(self) -> int:
        return self.obs_dim * self.frame_stack


@dataclass
class EpisodeState:
    step: int
    reached_zone: bool
    obj: MovableObject
    goal: np.ndarray  # current (intermediate) goal, frame A
    q: np.ndarray
    prev_action: np.ndarray
    curriculum_goal_index: int
    start: np.ndarray
    final_goal: np.ndarray
    action_gain: float
    rng_state: dict = None


@dataclass
class StepResult:
    observation: np.ndarray
    reward_total: float
    reward_terms: np.ndarray
    done: bool
    cause: str
    contact: bool = False
    v_obj: np.ndarray = None


# ---------------------------------------------------------------- pure pieces

def _unit(v, axis=-1):
    n = np.linalg.norm(v, axis=axis, keepdims=True)
    return v / np.where(n > 0, n, 1.0)


def compute_pushing_zone(p_obj, p_goal, l_obj):
    """Point half an object length behind the CoM, opposite the goal direction."""
    p_obj = np.asarray(p_obj, dtype=float)
    p_goal = np.asarray(p_goal, dtype=float)
    d = p_goal - p_obj
    n = np.linalg.norm(d, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ValueError("pushing zone undefined when the goal coincides with the object")
    return p_obj - 0.5 * np.asarray(l_obj, dtype=float)[..., None] * d / n


def in_pushing_zone(p_ee, p_zone, h_obj, radius=0.2):
    p_ee = np.asarray(p_ee, dtype=float)
    p_zone = np.asarray(p_zone, dtype=float)
    horiz = np.linalg.norm(p_ee[..., :2] - p_zone[..., :2], axis=-1)
    z = p_ee[..., 2]
    return (horiz <= radius) & (z >= 0.0) & (z <= h_obj)


def extent_along(dims, shape, obj_yaw, direction_xy):
    """Length of the object footprint projected on a planar direction."""
    return 2.0 * physics.support_halfwidth(dims, shape, obj_yaw, direction_xy)


def aabb_batch(obj_xy, obj_yaw, dims, shape, obj_z):
    c, s = np.abs(np.cos(obj_yaw)), np.abs(np.sin(obj_yaw))
    box = np.asarray(shape) == BOX
    ex = np.where(box, 0.5 * (dims[:, 0] * c + dims[:, 1] * s), 0.5 * dims[:, 0])
    ey = np.where(box, 0.5 * (dims[:, 0] * s + dims[:, 1] * c), 0.5 * dims[:, 0])
    h = dims[:, 2]
    lo = np.column_stack([obj_xy[:, 0] - ex, obj_xy[:, 1] - ey, obj_z - h / 2])
    hi = np.column_stack([obj_xy[:, 0] + ex, obj_xy[:, 1] + ey, obj_z + h / 2])
    return lo, hi


def reward_terms(p_ee, p_zone, action, prev_action, aabb_lo, aabb_hi, z_obj, h_obj, p_obj, p_goal, v_obj,
                 stage2, weights, mode="two_stage", v_clamp=1.0):
    """Per-term rewards r1..r7 (batched on the leading axis) after mode gating."""
    k = np.asarray(weights, dtype=float)
    p_ee = np.atleast_2d(p_ee)
    n = p_ee.shape[0]
    r = np.zeros((n, 7))
    r[:, 0] = k[0] * np.exp(-np.linalg.norm(p_ee - np.atleast_2d(p_zone), axis=1))
    r[:, 1] = k[1] * np.exp(-np.linalg.norm(np.atleast_2d(action) - np.atleast_2d(prev_action), axis=1))
    r[:, 2] = k[2]
    inside = np.all((np.atleast_2d(aabb_lo) <= p_ee) & (p_ee <= np.atleast_2d(aabb_hi)), axis=1)
    r[:, 3] = k[3] * inside
    r[:, 4] = k[4] * np.exp(-np.abs(np.asarray(z_obj, dtype=float) - np.asarray(h_obj, dtype=float) / 2))
    p_obj = np.atleast_2d(p_obj)
    p_goal = np.atleast_2d(p_goal)
    r[:, 5] = k[5] * np.exp(-np.linalg.norm(p_obj - p_goal, axis=1))
    v = np.atleast_2d(v_obj)[:, :2]
    vn = np.linalg.norm(v, axis=1, keepdims=True)
    v = np.where(vn > v_clamp, v * (v_clamp / np.where(vn > 0, vn, 1.0)), v)
    dhat = _unit(p_goal[:, :2] - p_obj[:, :2])
    r[:, 6] = k[6] * np.exp(np.einsum("ij,ij->i", dhat, v) - 1.0)

    if mode == "two_stage":
        s2 = np.broadcast_to(np.asarray(stage2, dtype=bool), (n,))
        r[s2, 0] = 0.0
        r[s2, 3] = 0.0
        r[~s2, 4:7] = 0.0
    elif mode == "baseline2_task_only":
        r[:, 0:4] = 0.0
    elif mode != "baseline1_all_on":
        raise ValueError(f"unknown reward mode {mode!r}")
    return r


def check_termination(obj_xy, goal_xy, tilt, step, config: EnvConfig):
    """Termination cause codes with priority success > tipped > out_of_region > timeout."""
    obj_xy = np.atleast_2d(obj_xy)
    dist = np.linalg.norm(obj_xy - np.atleast_2d(goal_xy)[:, :2], axis=1)
    radius = np.linalg.norm(obj_xy, axis=1)
    cause = np.full(len(obj_xy), RUNNING)
    timeout = np.asarray(step) >= config.horizon
    out = (radius > config.r4) | (obj_xy[:, 0] < 0.0)
    cause = np.where(timeout, TIMEOUT, cause)
    cause = np.where(out, OUT_OF_REGION, cause)
    cause = np.where(np.asarray(tilt) > config.max_tilt, TIPPED, cause)
    cause = np.where(dist < config.success_dist, SUCCESS, cause)
    return cause


def curriculum_goals(p_start, p_goal):
    """The three evenly spaced intermediate goals from start to goal."""
    p_start = np.asarray(p_start, dtype=float)
    p_goal = np.asarray(p_goal, dtype=float)
    return tuple(p_start + (i / 3.0) * (p_goal - p_start) for i in (1, 2, 3))


def curriculum_advance(success_history, window_size: int = 200, threshold: float = 0.9) -> bool:
    """True when a full window of episodes shows a success rate strictly above ``threshold``."""
    if len(success_history) < window_size:
        return False
    recent = list(success_history)[-window_size:]
    return sum(bool(s) for s in recent) / window_size > threshold


class Curriculum:
    """Global intermediate-goal index shared by all training environments."""

    def __init__(self, index: int = 1, window_size: int = 200, threshold: float = 0.9, enabled: bool = True):
        self.index = index if enabled else 3
        self.window = deque(maxlen=window_size)
        self.window_size = window_size
        self.threshold = threshold

    def record(self, successes) -> None:
        self.window.extend(bool(s) for s in successes)

    def maybe_advance(self) -> bool:
        if self.index < 3 and curriculum_advance(self.window, self.window_size, self.threshold):
            self.index += 1
            self.window.clear()
            return True
        return False


def build_observation(obj_pos, obj_eta, goal_pos, ee_pos, ee_rot, ee_eta, stage, extra=None):
    """Assemble the 25-slot observation rows (noise-free)."""
    n = len(obj_pos)
    obs = np.zeros((n, OBS_DIM + (0 if extra is None else extra.shape[1])))
    obs[:, 0:3] = obj_pos
    obs[:, 3:6] = obj_eta
    obs[:, 6:9] = goal_pos
    # goal is a position target; its orientation slots stay zero
    obs[:, 12:15] = ee_pos
    obs[:, 15:18] = ee_eta
    rt = np.swapaxes(ee_rot, -1, -2)
    obs[:, 18:21] = np.einsum("nij,nj->ni", rt, obj_pos - ee_pos)
    obs[:, 21:24] = np.einsum("nij,nj->ni", rt, goal_pos - ee_pos)
    obs[:, 24] = stage
    if extra is not None:
        obs[:, OBS_DIM:] = extra
    return obs


def add_observation_noise(obs, rng: np.random.Generator, sigma_pos: float, sigma_ang: float):
    noisy = obs.copy()
    if sigma_pos > 0:
        noisy[POS_SLOTS] += rng.normal(0.0, sigma_pos, len(POS_SLOTS))
    if sigma_ang > 0:
        noisy[ANG_SLOTS] += rng.normal(0.0, sigma_ang, len(ANG_SLOTS))
    return noisy


@dataclass(frozen=True)
class ObjectSpec:
    """Fixed object for evaluation / navigation resets."""

    shape: str
    dims: tuple
    mass: float = 1.5
    mu: float = 0.7

    @property
    def dims3(self) -> tuple:
        return tuple(self.dims) if self.shape == "box" else (self.dims[0], self.dims[0], self.dims[1])


# ---------------------------------------------------------------- vector env

class VecPushEnv:
    """N independent pushing episodes with per-environment RNG streams."""

    def __init__(self, config: EnvConfig, n_envs: int, seed: int, curriculum: Curriculum | None = None):
        self.cfg = config
        self.n = n_envs
        self.curriculum = curriculum or Curriculum(enabled=False)
        seqs = np.random.SeedSequence(seed).spawn(n_envs)
        self.rngs = [np.random.Generator(np.random.PCG64(s)) for s in seqs]
        arm = config.arm
        self.arm = arm
        self.alpha = np.asarray(config.action_scale, dtype=float)
        self.reach = arm.reach_after
        n = n_envs
        self.q = np.zeros((n, 6))
        self.prev_action = np.zeros((n, 6))
        self.step_count = np.zeros(n, dtype=int)
        self.reached = np.zeros(n, dtype=bool)
        self.obj_xy = np.zeros((n, 2))
        self.obj_yaw = np.zeros(n)
        self.obj_z = np.zeros(n)
        self.tilt = np.zeros(n)
        self.dims = np.ones((n, 3))
        self.shape = np.zeros(n, dtype=int)
        self.mass = np.ones(n)
        self.mu = np.full(n, 0.7)
        self.gain = np.ones(n)
        self.goal = np.zeros((n, 3))
        self.final_goal = np.zeros((n, 3))
        self.start = np.zeros((n, 3))
        self.goal_index = np.full(n, 3, dtype=int)
        self.ee_pos = np.zeros((n, 3))
        self.ee_rot = np.tile(np.eye(3), (n, 1, 1))
        self.stack = np.zeros((n, config.frame_stack, config.obs_dim))
        self.noise = config.obs_noise
        self.last_contact = np.zeros(n, dtype=bool)

    # -- resets ---------------------------------------------------------
    def reset_all(self, **kw) -> np.ndarray:
        for i in range(self.n):
            self.reset_env(i, **kw)
        return self.policy_obs()

    def reset_env(self, i: int, obj: ObjectSpec | None = None, obj_pose=None, goal_xy=None,
                  curriculum_index: int | None = None, action_gain: float | None = None):
        cfg, rng = self.cfg, self.rngs[i]
        if obj is None:
            dims = (rng.uniform(*cfg.size_lx), rng.uniform(*cfg.size_ly), rng.uniform(*cfg.size_lz))
            shape = BOX
        else:
            dims = obj.dims3
            shape = BOX if obj.shape == "box" else CYLINDER
        if obj_pose is None:
            rad = cfg.r1 * math.sqrt(rng.uniform())
            ang = rng.uniform(-math.pi, math.pi)
            x, y = cfg.spawn[0] + rad * math.cos(ang), cfg.spawn[1] + rad * math.sin(ang)
            yaw = wrap_angle(rng.uniform(-math.pi, math.pi))
        else:
            x, y, yaw = obj_pose
        if goal_xy is None:
            gx, gy = self._sample_goal(rng, x, y)
        else:
            gx, gy = goal_xy
        mass, mu, added = physics.randomize_physics(rng, cfg.randomization)
        if obj is not None:
            mass, mu = obj.mass, obj.mu
        gain = physics.action_effectiveness(added) if action_gain is None else action_gain

        h = dims[2]
        self.dims[i] = dims
        self.shape[i] = shape
        self.obj_xy[i] = (x, y)
        self.obj_yaw[i] = yaw
        self.obj_z[i] = h / 2
        self.tilt[i] = 0.0
        self.mass[i] = mass
        self.mu[i] = mu
        self.gain[i] = gain
        self.start[i] = (x, y, h / 2)
        self.final_goal[i] = (gx, gy, h / 2)
        idx = self.curriculum.index if curriculum_index is None else curriculum_index
        self.goal_index[i] = idx
        self.goal[i] = curriculum_goals(self.start[i], self.final_goal[i])[idx - 1]
        self.q[i] = self.arm.home
        self.prev_action[i] = 0.0
        self.step_count[i] = 0
        self.reached[i] = False
        self.last_contact[i] = False
        pos, rot = physics.fk_batch(self.arm, self.q[i:i + 1])
        self.ee_pos[i] = pos[0]
        self.ee_rot[i] = rot[0]
        obs = self._observe(np.array([i]))
        self.stack[i] = obs[0]

    def _sample_goal(self, rng, x, y):
        cfg = self.cfg
        for _ in range(100):
            rad = math.sqrt(rng.uniform(cfg.r2 ** 2, cfg.r3 ** 2))
            ang = rng.uniform(-cfg.sector_half_angle, cfg.sector_half_angle)
            gx, gy = rad * math.cos(ang), rad * math.sin(ang)
            if math.hypot(gx - x, gy - y) >= cfg.min_goal_dist:
                break
        return gx, gy

    # -- observation ----------------------------------------------------
    def _observe(self, idx: np.ndarray) -> np.ndarray:
        obj_pos = np.column_stack([self.obj_xy[idx], self.obj_z[idx]])
        obj_eta = np.column_stack([self.obj_yaw[idx], self.tilt[idx], np.zeros(len(idx))])
        ee_eta = physics.rotation_to_ypr(self.ee_rot[idx])
        extra = None
        if self.cfg.oracle:
            extra = np.column_stack([self.mass[idx], self.mu[idx], self.gain[idx]])
        obs = build_observation(obj_pos, obj_eta, self.goal[idx], self.ee_pos[idx], self.ee_rot[idx], ee_eta,
                                self.reached[idx].astype(float), extra)
        if self.noise and (self.cfg.noise_pos > 0 or self.cfg.noise_ang > 0):
            for r, i in enumerate(idx):
                obs[r] = add_observation_noise(obs[r], self.rngs[i], self.cfg.noise_pos, self.cfg.noise_ang)
        return obs

    def policy_obs(self) -> np.ndarray:
        return self.stack.reshape(self.n, -1).copy()

    # -- dynamics -------------------------------------------------------
    def _substeps(self, dq: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        bound = np.abs(dq) @ self.reach
        # signed distance from ee centre to the object surface (negative inside)
        _, pt, _, _ = physics.contact_batch(self.ee_pos, 0.0, self.obj_xy, self.obj_yaw, self.dims, self.shape)
        dist = np.linalg.norm(pt - self.ee_pos, axis=1)
        far = dist - self.arm.ee_radius > bound + 1e-3
        n = np.ceil(bound / cfg.substep_len).astype(int)
        n = np.clip(n, 1, cfg.max_substeps)
        return np.where(far, 1, n)

    def _advance_arm(self, q_target: np.ndarray, live: np.ndarray):
        """Move the arm to q_target in substeps, pushing the object on contact."""
        cfg = self.cfg
        q0 = self.q.copy()
        dq = q_target - q0
        nsub = self._substeps(dq)
        nsub[~live] = 0
        moved = np.zeros((self.n, 2))
        touched = np.zeros(self.n, dtype=bool)
        r_ee = self.arm.ee_radius
        for k in range(int(nsub.max(initial=0))):
            idx = np.nonzero((k < nsub) & (self.tilt <= cfg.max_tilt))[0]
            if len(idx) == 0:
                break
            frac = ((k + 1) / nsub[idx])[:, None]
            qk = q0[idx] + frac * dq[idx]
            pos, rot = physics.fk_batch(self.arm, qk)
            delta = pos - self.ee_pos[idx]
            self.ee_pos[idx] = pos
            self.ee_rot[idx] = rot
            act, pt, nrm, pen = physics.contact_batch(pos, r_ee, self.obj_xy[idx], self.obj_yaw[idx],
                                                      self.dims[idx], self.shape[idx])
            nxy_norm = np.linalg.norm(nrm[:, :2], axis=1)
            lateral = act & (nxy_norm >= 0.5)
            touched[idx[act]] = True
            if not lateral.any():
                continue
            sel = idx[lateral]
            npl = nrm[lateral, :2] / nxy_norm[lateral, None]
            tang = np.column_stack([-npl[:, 1], npl[:, 0]])
            d_t = np.einsum("ij,ij->i", delta[lateral, :2], tang)
            s = pen[lateral] / nxy_norm[lateral]
            disp = s[:, None] * npl + d_t[:, None] * tang
            hw = physics.support_halfwidth(self.dims[sel], self.shape[sel], self.obj_yaw[sel], npl)
            tips = self.mu[sel] * pt[lateral, 2] > hw
            if tips.any():
                t_idx = sel[tips]
                self.tilt[t_idx] = math.pi / 2
                self.obj_z[t_idx] = hw[tips]
            ok = ~tips
            if ok.any():
                o_idx = sel[ok]
                dx, dy, dyaw = physics.push_twist_batch(pt[lateral][ok, :2], self.obj_xy[o_idx], npl[ok], disp[ok],
                                                        cfg.limit_surface_c, cfg.mu_pusher)
                self.obj_xy[o_idx, 0] += dx
                self.obj_xy[o_idx, 1] += dy
                self.obj_yaw[o_idx] = wrap_angle(self.obj_yaw[o_idx] + dyaw)
                moved[o_idx, 0] += dx
                moved[o_idx, 1] += dy
        self.q = np.where(live[:, None], q_target, self.q)
        # frames that stopped early (tipped) still settle on the commanded joints
        stale = live & (self.tilt > cfg.max_tilt)
        if stale.any():
            pos, rot = physics.fk_batch(self.arm, self.q[stale])
            self.ee_pos[stale] = pos
            self.ee_rot[stale] = rot
        return moved, touched

    def step(self, actions: np.ndarray):
        """Advance every environment; finished episodes are reset automatically.

        Returns (policy_obs, rewards, dones, info) where info carries the
        per-term rewards, causes, the pre-reset policy observations of
        finished episodes and a few diagnostics.
        """
        cfg = self.cfg
        actions = np.asarray(actions, dtype=float)
        a = np.clip(actions, -1.0, 1.0)
        clipped = np.any(a != actions, axis=1)
        live = np.ones(self.n, dtype=bool)
        q_target = np.clip(self.q + self.gain[:, None] * self.alpha * a, self.arm.lower, self.arm.upper)
        moved, touched = self._advance_arm(q_target, live)
        v_obj = moved / cfg.dt
        self.step_count += 1

        p_obj = np.column_stack([self.obj_xy, self.obj_z])
        h = self.dims[:, 2]
        dvec = self.goal[:, :2] - self.obj_xy
        dn = np.linalg.norm(dvec, axis=1)
        dhat = np.where(dn[:, None] > 0, dvec / np.where(dn > 0, dn, 1.0)[:, None], np.array([1.0, 0.0]))
        l_obj = extent_along(self.dims, self.shape, self.obj_yaw, dhat)
        goal3 = np.column_stack([self.goal[:, :2], h / 2])
        d3 = goal3 - p_obj
        d3n = np.linalg.norm(d3, axis=1, keepdims=True)
        d3hat = np.where(d3n > 0, d3 / np.where(d3n > 0, d3n, 1.0), np.column_stack([dhat, np.zeros(self.n)]))
        p_zone = p_obj - 0.5 * l_obj[:, None] * d3hat
        in_zone = in_pushing_zone(self.ee_pos, p_zone, h, cfg.zone_radius)
        self.reached |= in_zone
        lo, hi = aabb_batch(self.obj_xy, self.obj_yaw, self.dims, self.shape, self.obj_z)
        terms = reward_terms(self.ee_pos, p_zone, a, self.prev_action, lo, hi, self.obj_z, h, p_obj, goal3, v_obj,
                             self.reached, cfg.reward_weights, cfg.reward_mode, cfg.v_clamp)
        # ungated task-level reward, identical across reward modes
        task = reward_terms(self.ee_pos, p_zone, a, self.prev_action, lo, hi, self.obj_z, h, p_obj, goal3, v_obj,
                            self.reached, cfg.reward_weights, "baseline2_task_only", cfg.v_clamp).sum(axis=1)
        self.prev_action = a
        cause = check_termination(self.obj_xy, self.goal, self.tilt, self.step_count, cfg)
        dones = cause != RUNNING

        obs = self._observe(np.arange(self.n))
        self.stack[:, :-1] = self.stack[:, 1:]
        self.stack[:, -1] = obs
        info = {
            "terms": terms,
            "cause": cause,
            "stage": self.reached.copy(),
            "task_reward": task,
            "v_obj": v_obj,
            "contact": touched,
            "action_clipped": clipped,
            "dist": dn,
            "goal_index": self.goal_index.copy(),
        }
        rewards = terms.sum(axis=1)
        if dones.any():
            info["terminal_obs"] = self.policy_obs()
            for i in np.nonzero(dones)[0]:
                self.reset_env(int(i))
        return self.policy_obs(), rewards, dones, info

    # -- snapshots ------------------------------------------------------
    def object(self, i: int) -> MovableObject:
        shape = "box" if self.shape[i] == BOX else "cylinder"
        dims = tuple(self.dims[i]) if shape == "box" else (self.dims[i, 0], self.dims[i, 2])
        pose = Pose6((self.obj_xy[i, 0], self.obj_xy[i, 1], self.obj_z[i]), (self.obj_yaw[i], 0.0, 0.0))
        return MovableObject(shape, dims, pose, float(self.mass[i]), float(min(max(self.mu[i], 1e-6), 2.0)),
                             float(self.tilt[i]))

    def episode_state(self, i: int) -> EpisodeState:
        return EpisodeState(int(self.step_count[i]), bool(self.reached[i]), self.object(i), self.goal[i].copy(),
                            self.q[i].copy(), self.prev_action[i].copy(), int(self.goal_index[i]),
                            self.start[i].copy(), self.final_goal[i].copy(), float(self.gain[i]),
                            self.rngs[i].bit_generator.state)


class PushEnv:
    """Single pushing episode without auto-reset."""

    def __init__(self, config: EnvConfig | None = None, seed: int = 0, curriculum_index: int = 3):
        self.cfg = config or EnvConfig()
        self.vec = VecPushEnv(self.cfg, 1, seed, Curriculum(index=curriculum_index))
        self.done = True

    def reset(self, **kw) -> np.ndarray:
        self.vec.reset_env(0, **kw)
        self.done = False
        return self.vec.stack[0, -1].copy()

    @property
    def state(self) -> EpisodeState:
        return self.vec.episode_state(0)

    def policy_obs(self) -> np.ndarray:
        return self.vec.policy_obs()[0]

    def step(self, action) -> StepResult:
        if self.done:
            raise RuntimeError("episode finished; call reset()")
        v = self.vec
        # step without the automatic reset so the final state stays inspectable
        saved = v.reset_env
        v.reset_env = lambda *a, **k: None
        try:
            _, rew, dones, info = v.step(np.asarray(action, dtype=float)[None])
        finally:
            v.reset_env = saved
        self.done = bool(dones[0])
        return StepResult(v.stack[0, -1].copy(), float(rew[0]), info["terms"][0], self.done,
                          CAUSES[int(info["cause"][0])], bool(info["contact"][0]), info["v_obj"][0])


def reset(config: EnvConfig, curriculum_index: int, seed: int, **kw):
    """Start one episode; returns (env, EpisodeState, Observation)."""
    env = PushEnv(config, seed, curriculum_index)
    obs = env.reset(**kw)
    return env, env.state, obs
