"""Scenario model: maps, static rectangles, movable objects and shared geometry."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ScenarioError(ValueError):
    """Raised when a scenario file cannot be parsed or fails validation."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def wrap_angle(theta):
    """Map an angle (scalar or array) into (-pi, pi]."""
    if np.ndim(theta) == 0:
        w = math.remainder(float(theta), 2.0 * math.pi)
        return math.pi if w == -math.pi else w
    w = np.remainder(np.asarray(theta, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    return np.where(w == -math.pi, math.pi, w)


@dataclass(frozen=True)
class Pose2:
    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y, "yaw": self.yaw}


@dataclass(frozen=True)
class Pose6:
    position: tuple[float, float, float]
    orientation: tuple[float, float, float] = (0.0, 0.0, 0.0)  # yaw, pitch, roll

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "orientation", tuple(wrap_angle(v) for v in self.orientation))

    @property
    def yaw(self) -> float:
        return self.orientation[0]


@dataclass
class GridMap:
    resolution: float
    width: int
    height: int
    occupancy: np.ndarray = None  # (height, width) bool, row = y index

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("map dimensions must be positive")
        if self.occupancy is None:
            self.occupancy = np.zeros((self.height, self.width), dtype=bool)
        self.occupancy = np.asarray(self.occupancy, dtype=bool)
        if self.occupancy.shape != (self.height, self.width):
            raise ValueError("occupancy shape does not match dimensions")

    @property
    def width_m(self) -> float:
        return self.width * self.resolution

    @property
    def height_m(self) -> float:
        return self.height * self.resolution

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        xs = (np.arange(self.width) + 0.5) * self.resolution
        ys = (np.arange(self.height) + 0.5) * self.resolution
        return xs, ys

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        """(row, col) of the cell containing a point."""
        return int(math.floor(y / self.resolution)), int(math.floor(x / self.resolution))

    def in_bounds(self, x: float, y: float) -> bool:
        return 0.0 <= x < self.width_m and 0.0 <= y < self.height_m

    def occupied_points(self) -> np.ndarray:
        rows, cols = np.nonzero(self.occupancy)
        return np.column_stack([(cols + 0.5) * self.resolution, (rows + 0.5) * self.resolution])

    def copy(self) -> GridMap:
        return GridMap(self.resolution, self.width, self.height, self.occupancy.copy())


@dataclass(frozen=True)
class Rect:
    """Axis-aligned static rectangle given by center and side lengths."""

    cx: float
    cy: float
    lx: float
    ly: float

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.cx - self.lx / 2, self.cy - self.ly / 2, self.cx + self.lx / 2, self.cy + self.ly / 2)


@dataclass
class MovableObject:
    shape: str  # "box" or "cylinder"
    dims: tuple  # box: (lx, ly, lz); cylinder: (diameter, height)
    pose: Pose6
    mass: float = 1.5
    mu: float = 0.7
    tilt: float = 0.0
    name: str = ""

    def __post_init__(self):
        self.dims = tuple(float(d) for d in self.dims)
        if self.shape == "box":
            if len(self.dims) != 3:
                raise ValueError("box needs dims (lx, ly, lz)")
        elif self.shape == "cylinder":
            if len(self.dims) != 2:
                raise ValueError("cylinder needs dims (diameter, height)")
        else:
            raise ValueError(f"unknown shape {self.shape!r}")
        if min(self.dims) <= 0:
            raise ValueError("dimensions must be positive")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not 0 < self.mu <= 2:
            raise ValueError("mu must lie in (0, 2]")
        if self.tilt < 0:
            raise ValueError("tilt must be non-negative")

    @property
    def height(self) -> float:
        return self.dims[2] if self.shape == "box" else self.dims[1]

    @property
    def footprint_dims(self) -> tuple[float, float]:
        """Planar (lx, ly); a cylinder reports its diameter twice."""
        if self.shape == "box":
            return self.dims[0], self.dims[1]
        return self.dims[0], self.dims[0]

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.pose.position[:2])

    def moved_to(self, x: float, y: float, yaw: float | None = None) -> MovableObject:
        yaw = self.pose.yaw if yaw is None else yaw
        o = self.pose.orientation
        pose = Pose6((x, y, self.pose.position[2]), (yaw, o[1], o[2]))
        return MovableObject(self.shape, self.dims, pose, self.mass, self.mu, self.tilt, self.name)

    def footprint_polygon(self, xy=None):
        """Shapely polygon of the ground footprint, optionally re-centred at ``xy``."""
        from shapely.geometry import Point, Polygon

        cx, cy = (self.pose.position[0], self.pose.position[1]) if xy is None else xy
        if self.shape == "cylinder":
            return Point(cx, cy).buffer(self.dims[0] / 2, quad_segs=16)
        return Polygon(box_corners(cx, cy, self.pose.yaw, self.dims[0], self.dims[1]))


@dataclass(frozen=True)
class RobotState:
    base: Pose2
    linear_speed: float = 0.0
    footprint: tuple[float, float] = (0.90, 0.60)


@dataclass
class Scenario:
    map: GridMap
    statics: list = field(default_factory=list)
    movables: list = field(default_factory=list)
    start: Pose2 = Pose2(0.0, 0.0)
    goal: Pose2 = Pose2(0.0, 0.0)
    seed: int = 0
    name: str = ""
    footprint: tuple[float, float] = (0.90, 0.60)


def box_corners(cx: float, cy: float, yaw: float, lx: float, ly: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    local = np.array([[lx, ly], [-lx, ly], [-lx, -ly], [lx, -ly]]) * 0.5
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([cx, cy])


def box_vertices(obj: MovableObject) -> np.ndarray:
    """The 8 world-frame vertices of a box object (upright, yaw only)."""
    lx, ly, lz = obj.dims if obj.shape == "box" else (obj.dims[0], obj.dims[0], obj.dims[1])
    x, y, z = obj.pose.position
    base = box_corners(x, y, obj.pose.yaw, lx, ly)
    zc = z if z > 0 else lz / 2
    lo = np.column_stack([base, np.full(4, zc - lz / 2)])
    hi = np.column_stack([base, np.full(4, zc + lz / 2)])
    return np.vstack([lo, hi])


def object_aabb(obj: MovableObject) -> tuple[np.ndarray, np.ndarray]:
    """World-frame axis-aligned bounds of a (possibly yawed) object.

    Object positions are centres of mass, so the box spans
    z in [z - h/2, z + h/2]; a zero z is read as "resting on the ground".
    """
    x, y, z = obj.pose.position
    h = obj.height
    zc = z if z > 0 else h / 2
    if obj.shape == "cylinder":
        r = obj.dims[0] / 2
        ex, ey = r, r
    else:
        c, s = abs(math.cos(obj.pose.yaw)), abs(math.sin(obj.pose.yaw))
        lx, ly = obj.dims[0], obj.dims[1]
        ex = 0.5 * (lx * c + ly * s)
        ey = 0.5 * (lx * s + ly * c)
    return np.array([x - ex, y - ey, zc - h / 2]), np.array([x + ex, y + ey, zc + h / 2])


def rasterize(scenario: Scenario, extra_rects=()) -> GridMap:
    """Mark every cell whose centre lies inside a static rectangle.

    Movables are deliberately left out; ``extra_rects`` lets callers add
    shapes (e.g. movables treated as static) as polygons or Rects.
    """
    m = scenario.map
    grid = GridMap(m.resolution, m.width, m.height)
    xs, ys = grid.cell_centers()
    for r in scenario.statics:
        x0, y0, x1, y1 = r.bounds
        cols = (xs >= x0) & (xs <= x1)
        rows = (ys >= y0) & (ys <= y1)
        grid.occupancy[np.ix_(rows, cols)] = True
    if extra_rects:
        mark_polygons(grid, extra_rects)
    return grid


def mark_polygons(grid: GridMap, shapes) -> None:
    """Mark cells whose centres fall inside any of the given shapely geometries."""
    from shapely import intersects_xy

    xs, ys = grid.cell_centers()
    gx, gy = np.meshgrid(xs, ys)
    for shp in shapes:
        if isinstance(shp, Rect):
            x0, y0, x1, y1 = shp.bounds
            grid.occupancy |= (gx >= x0) & (gx <= x1) & (gy >= y0) & (gy <= y1)
            continue
        minx, miny, maxx, maxy = shp.bounds
        sel = (gx >= minx) & (gx <= maxx) & (gy >= miny) & (gy <= maxy)
        if sel.any():
            inside = intersects_xy(shp, gx[sel], gy[sel])
            idx = np.nonzero(sel)
            grid.occupancy[idx[0][inside], idx[1][inside]] = True


def points_in_footprint(points: np.ndarray, pose: Pose2, footprint) -> np.ndarray:
    """Boolean mask of points lying inside the oriented footprint rectangle (closed)."""
    if len(points) == 0:
        return np.zeros(0, dtype=bool)
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    d = points - np.array([pose.x, pose.y])
    lx = d[:, 0] * c + d[:, 1] * s
    ly = -d[:, 0] * s + d[:, 1] * c
    return (np.abs(lx) <= footprint[0] / 2) & (np.abs(ly) <= footprint[1] / 2)


def _footprint_hits(grid: GridMap, pose: Pose2, footprint) -> bool:
    r = 0.5 * math.hypot(*footprint)
    res = grid.resolution
    c0 = max(int(math.floor((pose.x - r) / res)), 0)
    c1 = min(int(math.floor((pose.x + r) / res)) + 1, grid.width)
    r0 = max(int(math.floor((pose.y - r) / res)), 0)
    r1 = min(int(math.floor((pose.y + r) / res)) + 1, grid.height)
    sub = grid.occupancy[r0:r1, c0:c1]
    if not sub.any():
        return False
    rows, cols = np.nonzero(sub)
    pts = np.column_stack([(cols + c0 + 0.5) * res, (rows + r0 + 0.5) * res])
    return bool(points_in_footprint(pts, pose, footprint).any())


def footprint_collides(grid: GridMap, pose: Pose2, footprint=(0.90, 0.60)) -> bool:
    """True iff an occupied cell centre lies inside the footprint at ``pose``.

    Poses outside the map count as collisions.
    """
    if not grid.in_bounds(pose.x, pose.y):
        return True
    return _footprint_hits(grid, pose, footprint)


class FootprintChecker:
    """Repeated footprint queries against one grid, with a distance-transform shortcut."""

    def __init__(self, grid: GridMap, footprint=(0.90, 0.60)):
        from scipy.ndimage import distance_transform_edt

        self.grid = grid
        self.footprint = tuple(footprint)
        self.half_diag = 0.5 * math.hypot(*footprint)
        self.half_min = 0.5 * min(footprint)
        occ = grid.occupancy
        if occ.any():
            # distance (m) from each cell centre to the nearest occupied cell centre
            self.dist = distance_transform_edt(~occ) * grid.resolution
        else:
            self.dist = np.full(occ.shape, np.inf)

    def collides(self, pose: Pose2) -> bool:
        g = self.grid
        if not g.in_bounds(pose.x, pose.y):
            return True
        row, col = g.world_to_cell(pose.x, pose.y)
        d = self.dist[row, col]
        # the query point may sit up to half a cell diagonal from its cell centre
        slack = g.resolution * math.sqrt(0.5)
        if d - slack > self.half_diag:
            return False
        if d + slack < self.half_min:
            return True
        return _footprint_hits(g, pose, self.footprint)

    def collides_many(self, xs, ys, yaws) -> np.ndarray:
        """Vectorised ``collides`` for arrays of poses."""
        g = self.grid
        xs, ys, yaws = (np.asarray(a, dtype=float) for a in (xs, ys, yaws))
        out = np.ones(xs.shape, dtype=bool)
        inb = (xs >= 0) & (ys >= 0) & (xs < g.width_m) & (ys < g.height_m)
        cols = np.clip((xs / g.resolution).astype(int), 0, g.width - 1)
        rows = np.clip((ys / g.resolution).astype(int), 0, g.height - 1)
        d = self.dist[rows, cols]
        slack = g.resolution * math.sqrt(0.5)
        free = inb & (d - slack > self.half_diag)
        out[free] = False
        unsure = inb & ~free & ~(d + slack < self.half_min)
        for k in np.flatnonzero(unsure):
            out.flat[k] = _footprint_hits(g, Pose2(float(xs.flat[k]), float(ys.flat[k]), float(yaws.flat[k])),
                                          self.footprint)
        return out

    def clearance(self, x: float, y: float) -> float:
        if not self.grid.in_bounds(x, y):
            return 0.0
        row, col = self.grid.world_to_cell(x, y)
        return float(self.dist[row, col])


# ---------------------------------------------------------------- scenario IO

def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ScenarioError(f"{where}.{key}" if where else key, "missing")
    return d[key]


def _num(v, where: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ScenarioError(where, f"expected a finite number, got {v!r}")
    return float(v)


def _pose2(d, where: str) -> Pose2:
    if not isinstance(d, dict):
        raise ScenarioError(where, "expected an object with x, y, yaw")
    return Pose2(_num(_require(d, "x", where), f"{where}.x"), _num(_require(d, "y", where), f"{where}.y"),
                 _num(d.get("yaw", 0.0), f"{where}.yaw"))


def scenario_from_dict(data: dict, name: str = "") -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("scenario", "top level must be an object")
    mp = _require(data, "map", "")
    width_m = _num(_require(mp, "width_m", "map"), "map.width_m")
    height_m = _num(_require(mp, "height_m", "map"), "map.height_m")
    res = _num(_require(mp, "resolution_m", "map"), "map.resolution_m")
    if res <= 0 or width_m <= 0 or height_m <= 0:
        raise ScenarioError("map", "sizes and resolution must be positive")
    grid = GridMap(res, int(round(width_m / res)), int(round(height_m / res)))

    statics = []
    for i, s in enumerate(data.get("statics", [])):
        where = f"statics[{i}]"
        vals = [_num(_require(s, k, where), f"{where}.{k}") for k in ("cx", "cy", "lx", "ly")]
        if vals[2] <= 0 or vals[3] <= 0:
            raise ScenarioError(where, "side lengths must be positive")
        statics.append(Rect(*vals))

    movables = []
    for i, m in enumerate(data.get("movables", [])):
        where = f"movables[{i}]"
        shape = _require(m, "shape", where)
        dims = _require(m, "dims", where)
        if not isinstance(dims, list):
            raise ScenarioError(f"{where}.dims", "expected a list")
        dims = [_num(v, f"{where}.dims") for v in dims]
        p = _require(m, "pose", where)
        x = _num(_require(p, "x", f"{where}.pose"), f"{where}.pose.x")
        y = _num(_require(p, "y", f"{where}.pose"), f"{where}.pose.y")
        yaw = _num(p.get("yaw", 0.0), f"{where}.pose.yaw")
        try:
            h = dims[2] if shape == "box" else dims[1]
            obj = MovableObject(shape, tuple(dims), Pose6((x, y, h / 2), (yaw, 0.0, 0.0)),
                                mass=_num(m.get("mass_kg", 1.5), f"{where}.mass_kg"),
                                mu=_num(m.get("mu", 0.7), f"{where}.mu"), name=str(m.get("name", f"b{i}")))
        except (ValueError, IndexError) as exc:
            raise ScenarioError(where, str(exc)) from None
        movables.append(obj)

    start = _pose2(_require(data, "start", ""), "start")
    goal = _pose2(_require(data, "goal", ""), "goal")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ScenarioError("seed", "expected an integer")
    fp = data.get("robot_footprint", [0.90, 0.60])
    sc = Scenario(grid, statics, movables, start, goal, seed, name or str(data.get("name", "")),
                  (float(fp[0]), float(fp[1])))
    validate_scenario(sc)
    return sc


def validate_scenario(sc: Scenario) -> None:
    grid = rasterize(sc)
    for label, pose in (("start", sc.start), ("goal", sc.goal)):
        if not grid.in_bounds(pose.x, pose.y):
            raise ScenarioError(label, "outside the map")
        if footprint_collides(grid, pose, sc.footprint):
            raise ScenarioError(label, "robot footprint collides with a static obstacle")
    for i, obj in enumerate(sc.movables):
        lo, hi = object_aabb(obj)
        if lo[0] < 0 or lo[1] < 0 or hi[0] > grid.width_m or hi[1] > grid.height_m:
            raise ScenarioError(f"movables[{i}]", "object lies outside the map bounds")


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError("file", f"malformed JSON: {exc}") from None
    return scenario_from_dict(data, name=path.stem)


def scenario_to_dict(sc: Scenario) -> dict:
    return {
        "name": sc.name,
        "map": {"width_m": sc.map.width_m, "height_m": sc.map.height_m, "resolution_m": sc.map.resolution},
        "statics": [{"cx": r.cx, "cy": r.cy, "lx": r.lx, "ly": r.ly} for r in sc.statics],
        "movables": [{"name": o.name, "shape": o.shape, "dims": list(o.dims),
                      "pose": {"x": o.pose.position[0], "y": o.pose.position[1], "yaw": o.pose.yaw},
                      "mass_kg": o.mass, "mu": o.mu} for o in sc.movables],
        "start": sc.start.to_dict(),
        "goal": sc.goal.to_dict(),
        "seed": sc.seed,
    }


def bundled_scenario(name: str) -> Path:
    """Path of a scenario shipped with the package (e.g. ``fig7``)."""
    here = Path(__file__).parent / "data"
    return here / (name if name.endswith(".json") else name + ".json")
