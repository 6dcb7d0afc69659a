"""Hybrid A* coarse planning, box corridors and corridor-constrained smoothing."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt
from shapely.geometry import LineString, Point

from .world import FootprintChecker, GridMap, Pose2, wrap_angle


class NoPath(Exception):
    """No collision-free path between the query poses."""


class NotConverged(Exception):
    """Smoother hit its iteration cap; ``result`` still holds the last iterate."""

    def __init__(self, message: str, result: SmoothPath):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class PlannerConfig:
    step: float = 0.3
    turn_radii: tuple = (0.8, 1.6)
    heading_bins: int = 72
    goal_tol_xy: float = 0.15
    goal_tol_yaw: float = 0.35
    turn_penalty: float = 0.02
    heuristic: str = "euclidean"
    max_expansions: int = 400_000
    corridor_max_half: float = 1.5
    lambda_smooth: float = 10.0
    lambda_length: float = 1.0
    qp_tol: float = 1e-7
    qp_max_iter: int = 10_000
    kkt_tol: float = 1e-4
    sweep_margin: float = 0.05
    footprint: tuple = (0.90, 0.60)

    @property
    def curvatures(self) -> tuple:
        ks = [0.0]
        for r in self.turn_radii:
            ks += [1.0 / r, -1.0 / r]
        return tuple(ks)


@dataclass
class CoarsePath:
    states: list
    cost: float = 0.0

    @property
    def xy(self) -> np.ndarray:
        return np.array([[s.x, s.y] for s in self.states])

    @property
    def length(self) -> float:
        p = self.xy
        return float(np.linalg.norm(np.diff(p, axis=0), axis=1).sum()) if len(p) > 1 else 0.0


@dataclass(frozen=True)
class CorridorBox:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def __post_init__(self):
        if not (self.x_lo < self.x_hi and self.y_lo < self.y_hi):
            raise ValueError("corridor box must have positive extent")

    def contains(self, x: float, y: float, tol: float = 0.0) -> bool:
        return self.x_lo - tol <= x <= self.x_hi + tol and self.y_lo - tol <= y <= self.y_hi + tol


@dataclass
class SmoothPath:
    points: np.ndarray
    objective_value: float
    iterations: int
    kkt_residual: float = 0.0
    trace: list = field(default_factory=list)
    converged: bool = True

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum()) if len(self.points) > 1 else 0.0


@dataclass
class NavPlan:
    coarse: CoarsePath
    corridor: list
    smooth: SmoothPath
    swept_region: object  # shapely polygon

    def to_dict(self) -> dict:
        return {
            "coarse": [s.to_dict() for s in self.coarse.states],
            "corridor": [[b.x_lo, b.x_hi, b.y_lo, b.y_hi] for b in self.corridor],
            "smooth": self.smooth.points.tolist(),
            "objective": self.smooth.objective_value,
            "iterations": self.smooth.iterations,
            "kkt_residual": self.smooth.kkt_residual,
            "objective_trace": self.smooth.trace,
        }


# ---------------------------------------------------------------- hybrid A*

def _primitive_samples(cfg: PlannerConfig, spacing: float) -> np.ndarray:
    """Relative poses (n_prims, n_samples, 3) along each forward arc, endpoint last."""
    n = max(1, math.ceil(cfg.step / spacing))
    s = cfg.step * np.arange(1, n + 1) / n
    out = []
    for k in cfg.curvatures:
        if k == 0.0:
            out.append(np.column_stack([s, np.zeros(n), np.zeros(n)]))
        else:
            out.append(np.column_stack([np.sin(k * s) / k, (1 - np.cos(k * s)) / k, k * s]))
    return np.stack(out)


def _holonomic_costs(grid: GridMap, checker: FootprintChecker, goal: Pose2) -> np.ndarray:
    """Lower bound on centre travel distance to the goal (8-connected Dijkstra, scaled to stay admissible)."""
    slack = grid.resolution * math.sqrt(0.5)
    blocked = checker.dist + slack < checker.half_min
    cost = np.full(blocked.shape, np.inf)
    gr, gc = grid.world_to_cell(goal.x, goal.y)
    cost[gr, gc] = 0.0
    heap = [(0.0, gr, gc)]
    res = grid.resolution
    moves = [(dr, dc, res * math.hypot(dr, dc)) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dr or dc]
    while heap:
        c, r, q = heapq.heappop(heap)
        if c > cost[r, q]:
            continue
        for dr, dc, w in moves:
            rr, cc = r + dr, q + dc
            if 0 <= rr < grid.height and 0 <= cc < grid.width and not blocked[rr, cc]:
                nc = c + w
                if nc < cost[rr, cc]:
                    cost[rr, cc] = nc
                    heapq.heappush(heap, (nc, rr, cc))
    # octile paths overestimate straight lines by at most this factor; two cell-centre
    # offsets of half a diagonal each absorb the quantisation of start and goal
    return np.maximum(cost / (2.0 / math.sqrt(2.0 + math.sqrt(2.0))) - 2 * slack, 0.0)


def _segment_free(checker: FootprintChecker, a: Pose2, b: Pose2, spacing: float) -> bool:
    d = math.hypot(b.x - a.x, b.y - a.y)
    n = max(1, math.ceil(d / spacing))
    t = np.arange(1, n + 1) / n
    dyaw = wrap_angle(b.yaw - a.yaw)
    return not checker.collides_many(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y), a.yaw + t * dyaw).any()


def hybrid_astar(grid: GridMap, start: Pose2, goal: Pose2, footprint=None, config: PlannerConfig | None = None,
                 checker: FootprintChecker | None = None) -> CoarsePath:
    """Forward-only hybrid A* over arc primitives; raises NoPath when the search exhausts."""
    cfg = config or PlannerConfig()
    footprint = tuple(footprint or cfg.footprint)
    checker = checker or FootprintChecker(grid, footprint)
    if checker.collides(start):
        raise NoPath("start pose is in collision")
    if checker.collides(goal):
        raise NoPath("goal pose is in collision")

    def at_goal(x, y, th):
        return math.hypot(x - goal.x, y - goal.y) <= cfg.goal_tol_xy and \
            abs(wrap_angle(th - goal.yaw)) <= cfg.goal_tol_yaw

    if at_goal(start.x, start.y, start.yaw):
        if (start.x, start.y, start.yaw) == (goal.x, goal.y, goal.yaw):
            return CoarsePath([start], 0.0)
        if _segment_free(checker, start, goal, grid.resolution / 2):
            return CoarsePath([start, goal], math.hypot(goal.x - start.x, goal.y - start.y))

    spacing = grid.resolution / 2
    prims = _primitive_samples(cfg, spacing)
    n_prims, n_samp, _ = prims.shape
    prim_cost = np.array([cfg.step + (0.0 if k == 0 else cfg.turn_penalty) for k in cfg.curvatures])
    bin_w = 2 * math.pi / cfg.heading_bins
    res = grid.resolution

    # cells whose every point collides for all headings cannot carry the centre, so an
    # unreachable goal on this relaxation proves there is no path at all
    holo = _holonomic_costs(grid, checker, goal)
    sr, sc = grid.world_to_cell(start.x, start.y)
    if not math.isfinite(holo[sr, sc]):
        raise NoPath("goal region is disconnected from the start")
    use_holo = cfg.heuristic == "holonomic"

    def h(x, y):
        e = math.hypot(x - goal.x, y - goal.y)
        if use_holo:
            r, c = grid.world_to_cell(x, y)
            return max(e, holo[r, c])
        return e

    def key(x, y, th):
        return int(math.floor(x / res)), int(math.floor(y / res)), int(math.floor((th + math.pi) / bin_w)) % cfg.heading_bins

    nodes = [(start.x, start.y, start.yaw, -1, 0.0)]
    heap = [(h(start.x, start.y), 0, 0)]
    best = {key(start.x, start.y, start.yaw): 0.0}
    closed = set()
    counter = 1
    expansions = 0
    while heap:
        _, _, ni = heapq.heappop(heap)
        x, y, th, parent, g = nodes[ni]
        k0 = key(x, y, th)
        if k0 in closed:
            continue
        closed.add(k0)
        if at_goal(x, y, th):
            last = Pose2(x, y, th)
            if _segment_free(checker, last, goal, spacing):
                return _reconstruct(nodes, ni, goal)
        expansions += 1
        if expansions > cfg.max_expansions:
            raise NoPath(f"search budget of {cfg.max_expansions} expansions exhausted")
        c, s = math.cos(th), math.sin(th)
        wx = x + c * prims[:, :, 0] - s * prims[:, :, 1]
        wy = y + s * prims[:, :, 0] + c * prims[:, :, 1]
        wt = th + prims[:, :, 2]
        hit = checker.collides_many(wx, wy, wt).any(axis=1)
        for p in range(n_prims):
            if hit[p]:
                continue
            nx, ny, nt = float(wx[p, -1]), float(wy[p, -1]), wrap_angle(float(wt[p, -1]))
            kk = key(nx, ny, nt)
            if kk in closed:
                continue
            ng = g + prim_cost[p]
            if ng < best.get(kk, math.inf):
                best[kk] = ng
                nodes.append((nx, ny, nt, ni, ng))
                heapq.heappush(heap, (ng + h(nx, ny), counter, len(nodes) - 1))
                counter += 1
    raise NoPath("open set exhausted")


def _reconstruct(nodes, idx, goal: Pose2) -> CoarsePath:
    chain = []
    cost = nodes[idx][4]
    while idx >= 0:
        x, y, th, parent, _ = nodes[idx]
        chain.append(Pose2(x, y, th))
        idx = parent
    chain.reverse()
    last = chain[-1]
    if (last.x, last.y, last.yaw) != (goal.x, goal.y, goal.yaw):
        cost += math.hypot(goal.x - last.x, goal.y - last.y)
        chain.append(goal)
    return CoarsePath(chain, cost)


# ---------------------------------------------------------------- corridor

def inflate(grid: GridMap, radius: float) -> GridMap:
    """Mark every cell whose centre lies closer than ``radius`` to an occupied centre."""
    if not grid.occupancy.any() or radius <= 0:
        return grid.copy()
    dist = distance_transform_edt(~grid.occupancy) * grid.resolution
    return GridMap(grid.resolution, grid.width, grid.height, dist < radius)


def _grow_box(occ: np.ndarray, row: int, col: int, max_cells_lo, max_cells_hi):
    """Round-robin face expansion of a free cell rectangle; returns inclusive cell bounds."""
    r0 = r1 = row
    c0 = c1 = col
    h, w = occ.shape
    open_ = [True, True, True, True]  # +x, +y, -x, -y
    while any(open_):
        if open_[0]:
            if c1 + 1 < w and c1 + 1 - col <= max_cells_hi[0] and not occ[r0:r1 + 1, c1 + 1].any():
                c1 += 1
            else:
                open_[0] = False
        if open_[1]:
            if r1 + 1 < h and r1 + 1 - row <= max_cells_hi[1] and not occ[r1 + 1, c0:c1 + 1].any():
                r1 += 1
            else:
                open_[1] = False
        if open_[2]:
            if c0 - 1 >= 0 and col - (c0 - 1) <= max_cells_lo[0] and not occ[r0:r1 + 1, c0 - 1].any():
                c0 -= 1
            else:
                open_[2] = False
        if open_[3]:
            if r0 - 1 >= 0 and row - (r0 - 1) <= max_cells_lo[1] and not occ[r0 - 1, c0:c1 + 1].any():
                r0 -= 1
            else:
                open_[3] = False
    return r0, r1, c0, c1


def build_corridor(grid: GridMap, coarse: CoarsePath, max_half: float = 1.5) -> list:
    """One free axis-aligned box per interior path vertex, grown cell by cell."""
    res = grid.resolution
    boxes = []
    for s in coarse.states[1:-1]:
        row, col = grid.world_to_cell(s.x, s.y)
        if not (0 <= row < grid.height and 0 <= col < grid.width):
            raise ValueError(f"path vertex ({s.x:.3f}, {s.y:.3f}) lies outside the map")
        if grid.occupancy[row, col]:
            raise ValueError(f"path vertex ({s.x:.3f}, {s.y:.3f}) lies in an occupied cell")
        # number of extra cells allowed on each side while the face stays within max_half of the vertex
        lo = (int(math.floor((max_half - (s.x - col * res)) / res + 1e-9)),
              int(math.floor((max_half - (s.y - row * res)) / res + 1e-9)))
        hi = (int(math.floor((max_half - ((col + 1) * res - s.x)) / res + 1e-9)),
              int(math.floor((max_half - ((row + 1) * res - s.y)) / res + 1e-9)))
        r0, r1, c0, c1 = _grow_box(grid.occupancy, row, col, lo, hi)
        boxes.append(CorridorBox(c0 * res, (c1 + 1) * res, r0 * res, (r1 + 1) * res))
    return boxes


# ---------------------------------------------------------------- smoothing

def eval_objective(points, lambda_smooth: float = 10.0, lambda_length: float = 1.0):
    """Returns (smoothness, length, weighted total) for a point sequence."""
    p = np.asarray(points, dtype=float)
    if len(p) < 2:
        raise ValueError("need at least two points")
    second = p[:-2] + p[2:] - 2 * p[1:-1]
    fs = float(np.sum(second ** 2))
    fl = float(np.sum(np.diff(p, axis=0) ** 2))
    return fs, fl, lambda_smooth * fs + lambda_length * fl


def _gradient(p: np.ndarray, ls: float, ll: float) -> np.ndarray:
    g = np.zeros_like(p)
    s = p[:-2] + p[2:] - 2 * p[1:-1]
    g[:-2] += 2 * ls * s
    g[2:] += 2 * ls * s
    g[1:-1] -= 4 * ls * s
    d = np.diff(p, axis=0)
    g[1:] += 2 * ll * d
    g[:-1] -= 2 * ll * d
    return g


def smooth_path(points, corridor, lambda_smooth: float = 10.0, lambda_length: float = 1.0, tol: float = 1e-7,
                max_iter: int = 10_000, kkt_tol: float = 1e-4) -> SmoothPath:
    """Projected gradient (Barzilai-Borwein steps, monotone backtracking) on the box-constrained QP.

    Endpoints stay fixed; interior point i is confined to ``corridor[i-1]``.
    """
    p = np.array(points, dtype=float)
    n = len(p)
    if n < 2:
        raise ValueError("need at least two points")
    if len(corridor) != n - 2:
        raise ValueError("need exactly one corridor box per interior point")
    lo = np.array([[b.x_lo, b.y_lo] for b in corridor]).reshape(-1, 2)
    hi = np.array([[b.x_hi, b.y_hi] for b in corridor]).reshape(-1, 2)

    def f(q):
        return eval_objective(q, lambda_smooth, lambda_length)[2]

    p[1:-1] = np.clip(p[1:-1], lo, hi)
    fval = f(p)
    trace = [fval]
    if n == 2:
        return SmoothPath(p, fval, 0, 0.0, trace)

    # largest eigenvalue bound of the Hessian: 2*(16*ls + 4*ll)
    lipschitz = 2 * (16 * lambda_smooth + 4 * lambda_length)
    step = 1.0 / lipschitz
    g = _gradient(p, lambda_smooth, lambda_length)[1:-1]
    it = 0
    converged = False
    while it < max_iter:
        it += 1
        alpha = step
        while True:
            trial = p.copy()
            trial[1:-1] = np.clip(p[1:-1] - alpha * g, lo, hi)
            ft = f(trial)
            if ft <= fval or alpha <= 1.0 / lipschitz:
                break
            alpha *= 0.5
        if ft > fval:
            # a 1/L projected step cannot increase a convex quadratic; guard round-off
            ft = fval
            trial = p
        change = float(np.max(np.abs(trial[1:-1] - p[1:-1])))
        g_new = _gradient(trial, lambda_smooth, lambda_length)[1:-1]
        s_vec = (trial[1:-1] - p[1:-1]).ravel()
        y_vec = (g_new - g).ravel()
        sy = float(s_vec @ y_vec)
        step = float(s_vec @ s_vec) / sy if sy > 1e-300 else 1.0 / lipschitz
        step = min(max(step, 1.0 / lipschitz), 1e3 / lipschitz)
        assert ft <= fval, "objective increased"
        p, g, fval = trial, g_new, ft
        trace.append(fval)
        if change < tol:
            converged = True
            break
    kkt = float(np.max(np.abs(p[1:-1] - np.clip(p[1:-1] - g, lo, hi))))
    result = SmoothPath(p, fval, it, kkt, trace, converged or kkt <= kkt_tol)
    if not converged and kkt > kkt_tol:
        raise NotConverged(f"smoother stopped after {it} iterations with KKT residual {kkt:.2e}", result)
    return result


# ---------------------------------------------------------------- full plan

def swept_region(points, footprint=(0.90, 0.60), margin: float = 0.05):
    """Smoothed polyline inflated by the footprint half-diagonal plus a margin."""
    r = 0.5 * math.hypot(*footprint) + margin
    pts = [tuple(map(float, q)) for q in np.asarray(points)]
    if len(pts) == 1 or all(q == pts[0] for q in pts):
        return Point(pts[0]).buffer(r)
    return LineString(pts).buffer(r)


def plan(grid: GridMap, start: Pose2, goal: Pose2, config: PlannerConfig | None = None) -> NavPlan:
    """Coarse search, corridor generation, smoothing and swept-region construction."""
    cfg = config or PlannerConfig()
    checker = FootprintChecker(grid, cfg.footprint)
    coarse = hybrid_astar(grid, start, goal, cfg.footprint, cfg, checker)
    # corridors bound the robot centre; keep them clear of walls by the inscribed radius
    # less half a cell diagonal, which never swallows a footprint-feasible vertex
    clear = 0.5 * min(cfg.footprint) - grid.resolution * math.sqrt(0.5)
    corridor = build_corridor(inflate(grid, clear), coarse, cfg.corridor_max_half)
    try:
        smooth = smooth_path(coarse.xy, corridor, cfg.lambda_smooth, cfg.lambda_length, cfg.qp_tol, cfg.qp_max_iter,
                             cfg.kkt_tol)
    except NotConverged as exc:
        smooth = exc.result
    region = swept_region(smooth.points, cfg.footprint, cfg.sweep_margin)
    return NavPlan(coarse, corridor, smooth, region)
