"""Navigation state machine: track a plan, push obstructing objects aside, replan."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from shapely.geometry import Polygon, box
from shapely.ops import unary_union
from shapely.prepared import prep

from .planner import NavPlan, NoPath, PlannerConfig, plan
from .pushenv import CAUSES, Curriculum, EnvConfig, ObjectSpec, VecPushEnv
from .world import FootprintChecker, MovableObject, Pose2, Pose6, Scenario, box_corners, rasterize, wrap_angle

MODES = ("planning", "tracking", "positioning", "pushing", "replanning", "done", "failed")
TRANSITIONS = {
    ("planning", "tracking"), ("planning", "failed"),
    ("tracking", "positioning"), ("tracking", "done"), ("tracking", "replanning"), ("tracking", "failed"),
    ("positioning", "pushing"), ("positioning", "replanning"), ("positioning", "positioning"),
    ("pushing", "positioning"), ("pushing", "replanning"),
    ("replanning", "tracking"), ("replanning", "failed"),
}


class NoFeasibleTarget(Exception):
    """No sampled push target keeps the object off the path and clear of statics."""


class TrackingLost(Exception):
    pass


@dataclass(frozen=True)
class NavConfig:
    d_push: float = 1.2
    r_push: float = 1.0
    n_samples: int = 128
    v_max: float = 0.6
    w_max: float = 1.2
    gains: tuple = (1.5, 0.0, 0.3)
    heading_gain: float = 2.0
    dt: float = 0.1
    lookahead: float = 0.3
    goal_tol: float = 0.15
    lost_dist: float = 1.0
    position_speed: float = 0.6
    arm_mount: float = 0.25
    max_push: float = 0.5
    push_retries: int = 1
    max_pushes: int = 4
    max_time: float = 600.0
    standoff_clearance: float = 0.05
    tie_side: str = "left"


@dataclass
class TrackState:
    index: int = 0
    integral: float = 0.0
    prev_error: float | None = None


@dataclass
class PushDirective:
    obstacle: int
    target: np.ndarray
    subgoal: np.ndarray
    standoff: Pose2


@dataclass
class NavReport:
    outcome: str
    traversal_time_s: float | None
    path_length_m: float | None
    trajectory: list = field(default_factory=list)  # (t, x, y, yaw, mode)
    objects: list = field(default_factory=list)  # (t, index, x, y, yaw, tilt)
    transitions: list = field(default_factory=list)
    events: list = field(default_factory=list)
    base_steps: int = 0
    push_steps: int = 0
    plans: list = field(default_factory=list)
    selections: list = field(default_factory=list)
    dt: float = 0.1

    def summary(self) -> dict:
        return {"outcome": self.outcome, "traversal_time_s": self.traversal_time_s,
                "path_length_m": self.path_length_m, "base_steps": self.base_steps, "push_steps": self.push_steps,
                "pushes": sum(1 for e in self.events if e[1] == "push")}

    def to_dict(self) -> dict:
        return {"summary": self.summary(), "trajectory": self.trajectory, "objects": self.objects,
                "transitions": self.transitions, "events": self.events}


# ---------------------------------------------------------------- pure checks

def interaction_check(robot_xy, obj_xy, d_push: float) -> bool:
    return math.dist(tuple(robot_xy)[:2], tuple(obj_xy)[:2]) <= d_push


def obstruction_check(region, obj: MovableObject) -> bool:
    """True iff the object footprint intersects the swept region of the plan."""
    if isinstance(region, NavPlan):
        region = region.swept_region
    return bool(region.intersects(obj.footprint_polygon()))


def statics_union(scenario: Scenario):
    return unary_union([box(*r.bounds) for r in scenario.statics]) if scenario.statics else Polygon()


def sample_targets(obj: MovableObject, region, blocked, bounds, r_push: float, n_samples: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Uniform disc samples around the object whose footprint avoids the path region and ``blocked``.

    ``bounds`` is (xmin, ymin, xmax, ymax) of the map. Raises NoFeasibleTarget when nothing survives.
    """
    p = obj.xy
    if r_push <= 0:
        cand = p[None, :]
    else:
        rad = r_push * np.sqrt(rng.uniform(size=n_samples))
        ang = rng.uniform(0.0, 2 * math.pi, size=n_samples)
        cand = p + np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    region_p = prep(region)
    blocked_p = prep(blocked) if blocked is not None and not blocked.is_empty else None
    area = box(*bounds)
    keep = []
    for q in cand:
        fp = obj.footprint_polygon(tuple(q))
        if region_p.intersects(fp):
            continue
        if blocked_p is not None and blocked_p.intersects(fp):
            continue
        if not area.contains(fp):
            continue
        keep.append(q)
    if not keep:
        raise NoFeasibleTarget(f"none of {len(cand)} candidates around ({p[0]:.2f}, {p[1]:.2f}) is feasible")
    return np.array(keep)


def select_target(candidates, p_obj, normal=None) -> np.ndarray:
    """Closest candidate; ties go to the smaller angle from ``normal``, then lexicographic (x, y)."""
    c = np.asarray(candidates, dtype=float).reshape(-1, 2)
    p = np.asarray(p_obj, dtype=float)
    d = np.linalg.norm(c - p, axis=1)
    best = d.min()
    tied = np.nonzero(d <= best + 1e-12)[0]
    if len(tied) == 1:
        return c[tied[0]]
    if normal is not None:
        nrm = np.asarray(normal, dtype=float)
        off = c[tied] - p
        ang = np.abs(np.arctan2(off[:, 0] * nrm[1] - off[:, 1] * nrm[0], off @ nrm))
        tied = tied[ang <= ang.min() + 1e-12]
    order = sorted(tied, key=lambda i: (c[i, 0], c[i, 1]))
    return c[order[0]]


def outward_normal(points, p_obj, tie_side: str = "left") -> np.ndarray:
    """Unit normal of the path at its closest point, pointing toward the object side."""
    pts = np.asarray(points, dtype=float)
    xy = np.asarray(p_obj, dtype=float)
    if len(pts) < 2:
        return np.array([0.0, 1.0])
    seg, _, _, _, lateral = _project(pts, xy, 0)
    t = pts[seg + 1] - pts[seg]
    t = t / max(np.linalg.norm(t), 1e-12)
    left = np.array([-t[1], t[0]])
    if lateral > 0 or (lateral == 0 and tie_side == "left"):
        return left
    return -left


# ---------------------------------------------------------------- tracking

def _project(points: np.ndarray, xy: np.ndarray, start: int):
    """Closest point on the polyline from segment ``start`` on: (segment, t, point, signed lateral error)."""
    best = (start, 0.0, points[start], math.inf, 0.0)
    for i in range(start, len(points) - 1):
        a, b = points[i], points[i + 1]
        ab = b - a
        L2 = float(ab @ ab)
        t = 0.0 if L2 == 0 else min(max(float((xy - a) @ ab) / L2, 0.0), 1.0)
        q = a + t * ab
        d = float(np.linalg.norm(xy - q))
        if d < best[3] - 1e-12:
            cross = ab[0] * (xy[1] - a[1]) - ab[1] * (xy[0] - a[0])
            best = (i, t, q, d, math.copysign(d, cross) if L2 > 0 else 0.0)
    return best


def _point_ahead(points: np.ndarray, seg: int, t: float, dist: float) -> np.ndarray:
    pos = points[seg] + t * (points[seg + 1] - points[seg])
    i = seg
    remaining = dist
    while i < len(points) - 1:
        nxt = points[i + 1]
        d = float(np.linalg.norm(nxt - pos))
        if d >= remaining:
            return pos + (nxt - pos) * (remaining / d) if d > 0 else pos
        remaining -= d
        pos = nxt
        i += 1
    return points[-1]


def pid_track_step(pose: Pose2, points, state: TrackState, cfg: NavConfig = NavConfig()):
    """One unicycle control step; returns (new pose, v, omega, cross-track error, finished)."""
    pts = np.asarray(points, dtype=float)
    xy = np.array([pose.x, pose.y])
    if len(pts) == 1 or np.linalg.norm(pts[-1] - xy) <= cfg.goal_tol:
        return pose, 0.0, 0.0, 0.0, True
    seg, t, _, _, err = _project(pts, xy, min(state.index, len(pts) - 2))
    state.index = seg
    if abs(err) > cfg.lost_dist:
        raise TrackingLost(f"cross-track error {err:.2f} m")
    ahead = _point_ahead(pts, seg, t, cfg.lookahead)
    seg_dir = pts[seg + 1] - pts[seg]
    path_heading = math.atan2(seg_dir[1], seg_dir[0])
    if np.linalg.norm(ahead - xy) > 1e-9:
        path_heading = math.atan2(ahead[1] - xy[1], ahead[0] - xy[0])
    head_err = wrap_angle(path_heading - pose.yaw)
    kp, ki, kd = cfg.gains
    state.integral += err * cfg.dt
    deriv = 0.0 if state.prev_error is None else (err - state.prev_error) / cfg.dt
    state.prev_error = err
    omega = -(kp * err + ki * state.integral + kd * deriv) + cfg.heading_gain * head_err
    omega = float(np.clip(omega, -cfg.w_max, cfg.w_max))
    to_goal = float(np.linalg.norm(pts[-1] - xy))
    v = cfg.v_max * max(0.0, math.cos(head_err))
    v = float(np.clip(min(v, to_goal / cfg.dt), 0.0, cfg.v_max))
    yaw = pose.yaw + omega * cfg.dt
    mid = pose.yaw + 0.5 * omega * cfg.dt
    new = Pose2(pose.x + v * math.cos(mid) * cfg.dt, pose.y + v * math.sin(mid) * cfg.dt, yaw)
    return new, v, omega, err, False


# ---------------------------------------------------------------- push geometry

def _rot(phi):
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def robot_polygon(pose: Pose2, footprint=(0.90, 0.60)):
    return Polygon(box_corners(pose.x, pose.y, pose.yaw, *footprint))


def find_standoff(obj: MovableObject, goal_xy, robot: Pose2, checker: FootprintChecker, obstacles,
                  env_cfg: EnvConfig, cfg: NavConfig, footprint=(0.90, 0.60), reachable=None):
    """Base pose that places object and goal where the pushing skill was trained.

    Candidates are ranked by distance from the nominal training placement; the first one
    that is collision-free and accepted by ``reachable`` wins. Returns
    (base pose, object offset in frame A, goal in frame A) or None.
    """
    nominal = np.array(env_cfg.spawn)
    offsets = [nominal]
    for r in (0.6 * env_cfg.r1, 0.95 * env_cfg.r1):
        for k in range(8):
            a = k * math.pi / 4
            offsets.append(nominal + r * np.array([math.cos(a), math.sin(a)]))
    p = obj.xy
    g = np.asarray(goal_xy, dtype=float)
    obj_poly = obj.footprint_polygon().buffer(cfg.standoff_clearance)
    ranked = []
    for k in range(72):
        phi = wrap_angle(k * 2 * math.pi / 72)
        rot = _rot(phi)
        for o in offsets:
            arm = p - rot @ o
            g_a = rot.T @ (g - arm)
            rad = float(np.linalg.norm(g_a))
            if not (env_cfg.r2 <= rad <= env_cfg.r3):
                continue
            if abs(math.atan2(g_a[1], g_a[0])) > env_cfg.sector_half_angle:
                continue
            base_xy = arm - cfg.arm_mount * np.array([math.cos(phi), math.sin(phi)])
            score = float(np.linalg.norm(o - nominal)) + 0.3 * abs(rad - 0.5 * (env_cfg.r2 + env_cfg.r3)) \
                + 0.05 * math.dist((robot.x, robot.y), base_xy) + 0.02 * abs(wrap_angle(phi - robot.yaw))
            ranked.append((score, k, len(ranked), Pose2(base_xy[0], base_xy[1], phi), o, g_a))
    ranked.sort(key=lambda c: c[:3])
    for _, _, _, pose, o, g_a in ranked:
        if checker.collides(pose):
            continue
        poly = robot_polygon(pose, footprint)
        if poly.intersects(obj_poly) or any(poly.intersects(ob) for ob in obstacles):
            continue
        if reachable is not None and reachable(pose) is None:
            continue
        return pose, o, g_a
    return None


def plan_subgoal(obj: MovableObject, target, robot, checker, obstacles, env_cfg, cfg, footprint, reachable=None):
    """Largest reachable step toward ``target`` (full distance first, then shorter pushes)."""
    p = obj.xy
    t = np.asarray(target, dtype=float)
    dist = float(np.linalg.norm(t - p))
    steps = [dist] + [d for d in (cfg.max_push, 0.4, 0.3, 0.2) if d < dist]
    for d in steps:
        sub = p + (t - p) * (d / dist) if dist > 0 else t
        found = find_standoff(obj, sub, robot, checker, obstacles, env_cfg, cfg, footprint, reachable)
        if found is not None:
            return sub, found
    return None


def base_motion(start: Pose2, goal: Pose2, cfg: NavConfig, blocked) -> list | None:
    """Collision-free discrete base motion for the legged base, or None.

    Tries rotate-then-translate, translate-then-rotate and simultaneous interpolation.
    ``blocked(pose)`` reports collisions.
    """
    dist = math.hypot(goal.x - start.x, goal.y - start.y)
    dyaw = wrap_angle(goal.yaw - start.yaw)
    n_t = max(1, math.ceil(dist / (cfg.position_speed * cfg.dt)))
    n_r = max(1, math.ceil(abs(dyaw) / (cfg.w_max * cfg.dt)))

    def lerp(a: Pose2, b_xy, b_yaw, n):
        d = wrap_angle(b_yaw - a.yaw)
        return [Pose2(a.x + (b_xy[0] - a.x) * k / n, a.y + (b_xy[1] - a.y) * k / n, a.yaw + d * k / n)
                for k in range(1, n + 1)]

    turned = Pose2(start.x, start.y, start.yaw + dyaw)
    moved = Pose2(goal.x, goal.y, start.yaw)
    options = [
        lerp(start, (start.x, start.y), start.yaw + dyaw, n_r) + lerp(turned, (goal.x, goal.y), goal.yaw, n_t),
        lerp(start, (goal.x, goal.y), start.yaw, n_t) + lerp(moved, (goal.x, goal.y), goal.yaw, n_r),
        lerp(start, (goal.x, goal.y), goal.yaw, max(n_t, n_r)),
    ]
    options.sort(key=len)
    for poses in options:
        if not any(blocked(q) for q in poses):
            return poses
    return None


def _object_spec(obj: MovableObject) -> ObjectSpec:
    if obj.shape == "box":
        return ObjectSpec("box", tuple(obj.dims), obj.mass, obj.mu)
    return ObjectSpec("cylinder", tuple(obj.dims), obj.mass, obj.mu)


def execute_push(obj: MovableObject, base: Pose2, goal_xy, actor, env_cfg: EnvConfig, cfg: NavConfig, blocked,
                 seed: int):
    """Run the pushing skill from a frozen base; statics stop the object.

    Returns (object after the push, cause name, number of control steps).
    """
    phi = base.yaw
    rot = _rot(phi)
    arm = np.array([base.x, base.y]) + cfg.arm_mount * np.array([math.cos(phi), math.sin(phi)])
    o_a = rot.T @ (obj.xy - arm)
    g_a = rot.T @ (np.asarray(goal_xy, dtype=float) - arm)
    env = VecPushEnv(env_cfg, 1, seed, Curriculum(enabled=False))
    env.reset_env(0, obj=_object_spec(obj), obj_pose=(o_a[0], o_a[1], wrap_angle(obj.pose.yaw - phi)),
                  goal_xy=tuple(g_a), curriculum_index=3, action_gain=1.0)
    blocked_p = prep(blocked) if blocked is not None and not blocked.is_empty else None
    actor.begin(env)
    saved = env.reset_env
    env.reset_env = lambda *a, **k: None
    obs = env.policy_obs()
    cause = "timeout"
    steps = 0
    try:
        for _ in range(env_cfg.horizon):
            prev_xy, prev_yaw = env.obj_xy.copy(), env.obj_yaw.copy()
            obs, _, dones, info = env.step(actor(env, obs))
            steps += 1
            if blocked_p is not None and env.tilt[0] <= env_cfg.max_tilt:
                w = arm + rot @ env.obj_xy[0]
                moved = obj.moved_to(w[0], w[1], wrap_angle(env.obj_yaw[0] + phi))
                if blocked_p.intersects(moved.footprint_polygon()):
                    env.obj_xy[:] = prev_xy
                    env.obj_yaw[:] = prev_yaw
            if dones[0]:
                cause = CAUSES[int(info["cause"][0])]
                break
    finally:
        env.reset_env = saved
    w = arm + rot @ env.obj_xy[0]
    final = MovableObject(obj.shape, obj.dims, Pose6((w[0], w[1], env.obj_z[0]),
                                                     (wrap_angle(env.obj_yaw[0] + phi), 0.0, 0.0)),
                          obj.mass, obj.mu, float(env.tilt[0]), obj.name)
    return final, cause, steps


# ---------------------------------------------------------------- main loop

class Navigator:
    def __init__(self, scenario: Scenario, actor=None, config: NavConfig = NavConfig(),
                 planner_cfg: PlannerConfig | None = None, env_cfg: EnvConfig | None = None, interactive: bool = True):
        self.sc = scenario
        self.actor = actor
        self.cfg = config
        self.pcfg = planner_cfg or PlannerConfig(footprint=scenario.footprint)
        self.env_cfg = env_cfg or EnvConfig()
        self.interactive = interactive
        self.objects = list(scenario.movables)
        self.handled = [False] * len(self.objects)
        self.statics = statics_union(scenario)
        self.rng = np.random.Generator(np.random.PCG64(scenario.seed))
        m = scenario.map
        self.bounds = (0.0, 0.0, m.width_m, m.height_m)
        self.report = NavReport("failed", None, None, dt=config.dt)
        self.pose = scenario.start
        self.mode = "planning"
        self.clock_steps = 0
        self.push_steps = 0
        self.length = 0.0

    # -- bookkeeping ------------------------------------------------------
    @property
    def clock(self) -> float:
        return self.clock_steps * self.cfg.dt + self.push_steps / self.env_cfg.control_rate

    def _go(self, mode: str) -> None:
        if (self.mode, mode) not in TRANSITIONS:
            raise RuntimeError(f"illegal transition {self.mode} -> {mode}")
        self.report.transitions.append((round(self.clock, 6), self.mode, mode))
        self.mode = mode

    def _move(self, new: Pose2, mode: str) -> None:
        self.length += math.hypot(new.x - self.pose.x, new.y - self.pose.y)
        self.pose = new
        self.clock_steps += 1
        self.report.trajectory.append((round(self.clock, 6), new.x, new.y, new.yaw, mode))

    def _log_objects(self) -> None:
        for i, o in enumerate(self.objects):
            self.report.objects.append((round(self.clock, 6), i, float(o.xy[0]), float(o.xy[1]), o.pose.yaw, o.tilt))

    def _grid(self, with_movables):
        extra = [o.footprint_polygon() for i, o in enumerate(self.objects) if with_movables(i)]
        return rasterize(self.sc, extra_rects=extra)

    def _obstacle_polys(self, exclude: int | None = None):
        return [o.footprint_polygon() for i, o in enumerate(self.objects) if i != exclude]

    def _plan(self) -> NavPlan:
        if self.interactive:
            grid = self._grid(lambda i: self.handled[i])
        else:
            grid = self._grid(lambda i: True)
        p = plan(grid, self.pose, self.sc.goal, self.pcfg)
        self.report.plans.append(p)
        return p

    # -- run ----------------------------------------------------------------
    def run(self) -> NavReport:
        cfg = self.cfg
        self._log_objects()
        self.report.trajectory.append((0.0, self.pose.x, self.pose.y, self.pose.yaw, "planning"))
        try:
            nav_plan = self._plan()
        except NoPath as exc:
            self.report.events.append((0.0, "nopath", str(exc)))
            self._go("failed")
            return self._finish("failed")
        self._go("tracking")
        track = TrackState()
        pushes = [0] * len(self.objects)
        while True:
            if self.clock > cfg.max_time:
                self.report.events.append((self.clock, "timeout", ""))
                self._go("failed")
                return self._finish("failed")
            if self.interactive:
                hit = self._obstructing(nav_plan)
                if hit is not None:
                    self._go("positioning")
                    ok = self._handle(hit, nav_plan, pushes)
                    self._go("replanning")
                    if not ok:
                        self.handled[hit] = True  # now avoided as a static obstacle
                    self._rejoin(nav_plan)
                    try:
                        nav_plan = self._plan()
                    except NoPath as exc:
                        self.report.events.append((self.clock, "nopath", str(exc)))
                        self._go("failed")
                        return self._finish("failed")
                    self._go("tracking")
                    track = TrackState()
                    continue
            try:
                new, v, w, err, finished = pid_track_step(self.pose, nav_plan.smooth.points, track, cfg)
            except TrackingLost as exc:
                self.report.events.append((self.clock, "tracking_lost", str(exc)))
                self._go("replanning")
                try:
                    nav_plan = self._plan()
                except NoPath as exc2:
                    self.report.events.append((self.clock, "nopath", str(exc2)))
                    self._go("failed")
                    return self._finish("failed")
                self._go("tracking")
                track = TrackState()
                continue
            if finished:
                self._go("done")
                return self._finish("success")
            self._move(new, "tracking")

    def _obstructing(self, nav_plan: NavPlan):
        for i, o in enumerate(self.objects):
            if self.handled[i]:
                continue
            if obstruction_check(nav_plan, o) and interaction_check((self.pose.x, self.pose.y), o.xy,
                                                                    self.cfg.d_push):
                return i
        return None

    def _handle(self, i: int, nav_plan: NavPlan, pushes) -> bool:
        """Positioning and pushing for obstacle ``i``; True when it no longer obstructs."""
        cfg = self.cfg
        failures = 0
        target = None
        others = unary_union([self.statics] + self._obstacle_polys(exclude=i))
        checker = FootprintChecker(self._grid(lambda j: j != i and self.handled[j]), self.pcfg.footprint)
        while pushes[i] < cfg.max_pushes:
            obj = self.objects[i]
            if target is None:
                try:
                    cands = sample_targets(obj, nav_plan.swept_region, others, self.bounds, cfg.r_push,
                                           cfg.n_samples, self.rng)
                except NoFeasibleTarget as exc:
                    self.report.events.append((self.clock, "no_target", str(exc)))
                    return False
                target = select_target(cands, obj.xy, outward_normal(nav_plan.smooth.points, obj.xy, cfg.tie_side))
                self._check_selection(target, cands, obj, nav_plan, others)
            obj_poly = obj.footprint_polygon()

            def blocked(q, obj_poly=obj_poly):
                return checker.collides(q) or robot_polygon(q, self.pcfg.footprint).intersects(obj_poly)

            found = plan_subgoal(obj, target, self.pose, checker, self._obstacle_polys(exclude=i), self.env_cfg,
                                 cfg, self.pcfg.footprint, lambda q: base_motion(self.pose, q, cfg, blocked))
            if found is None:
                self.report.events.append((self.clock, "no_standoff", f"object {i}"))
                return False
            sub, (standoff, _, _) = found
            for q in base_motion(self.pose, standoff, cfg, blocked):
                self._move(q, "positioning")
            self._go("pushing")
            seed = int(self.rng.integers(2 ** 31))
            # the skill stops within success_dist of its goal; aim one radius past the sub-goal
            push_dir = sub - obj.xy
            aim = sub + self.env_cfg.success_dist * push_dir / max(float(np.linalg.norm(push_dir)), 1e-9)
            new_obj, cause, steps = execute_push(obj, standoff, aim, self.actor, self.env_cfg, cfg,
                                                 unary_union([self.statics] + self._obstacle_polys(exclude=i)), seed)
            pushes[i] += 1
            self.push_steps += steps
            self.objects[i] = new_obj
            self._log_objects()
            self.report.events.append((self.clock, "push", f"object {i} -> ({sub[0]:.2f}, {sub[1]:.2f}): {cause}"))
            if new_obj.tilt > self.env_cfg.max_tilt:
                return False
            if not obstruction_check(nav_plan, new_obj):
                self.handled[i] = True
                return True
            if cause != "success":
                failures += 1
                if failures > cfg.push_retries:
                    return False
                target = None  # retry with a fresh target
            elif np.linalg.norm(sub - target) < 1e-9:
                target = None  # reached the target yet still in the way: pick again from here
            self._go("positioning")
        return False

    def _rejoin(self, nav_plan: NavPlan) -> None:
        """Step back onto the previous path with its heading so a forward-only replan can start cleanly."""
        pts = np.asarray(nav_plan.smooth.points, dtype=float)
        if len(pts) < 2:
            return
        seg, _, q, _, _ = _project(pts, np.array([self.pose.x, self.pose.y]), 0)
        d = pts[seg + 1] - pts[seg]
        heading = math.atan2(d[1], d[0])
        checker = FootprintChecker(self._grid(lambda j: self.handled[j]), self.pcfg.footprint)
        polys = [o.footprint_polygon() for j, o in enumerate(self.objects) if not self.handled[j]]

        def blocked(p):
            return checker.collides(p) or any(robot_polygon(p, self.pcfg.footprint).intersects(o) for o in polys)

        for goal in (Pose2(q[0], q[1], heading), Pose2(self.pose.x, self.pose.y, heading)):
            poses = base_motion(self.pose, goal, self.cfg, blocked)
            if poses is not None:
                for p in poses:
                    self._move(p, "replanning")
                return

    def _check_selection(self, target, cands, obj, nav_plan, blocked) -> None:
        d = np.linalg.norm(cands - obj.xy, axis=1)
        moved = obj.moved_to(*target)
        self.report.selections.append({
            "target": target.tolist(), "n_candidates": int(len(cands)),
            "optimal": bool(np.linalg.norm(target - obj.xy) <= d.min() + 1e-12),
            "feasible": not obstruction_check(nav_plan, moved) and not blocked.intersects(moved.footprint_polygon()),
        })

    def _finish(self, outcome: str) -> NavReport:
        r = self.report
        r.outcome = outcome
        r.base_steps = self.clock_steps
        r.push_steps = self.push_steps
        if outcome == "success":
            r.traversal_time_s = self.clock
            r.path_length_m = self.length
        return r


def run_navigation(scenario: Scenario, actor=None, config: NavConfig = NavConfig(), interactive: bool = True,
                   planner_cfg: PlannerConfig | None = None, env_cfg: EnvConfig | None = None) -> NavReport:
    """Drive from start to goal; ``actor`` is the pushing skill (policy or scripted adapter)."""
    if interactive and scenario.movables and actor is None:
        raise ValueError("interactive navigation needs a pushing actor")
    return Navigator(scenario, actor, config, planner_cfg, env_cfg, interactive).run()
