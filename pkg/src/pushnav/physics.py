"""Arm kinematics, pusher/object contact and quasi-static planar pushing.

The batch kernels (``*_batch``) take arrays with a leading environment axis
and are what the vectorised training environment calls; the plain functions
wrap them for single objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .world import MovableObject, Pose6, wrap_angle

BOX, CYLINDER = 0, 1
_EYE3 = np.eye(3)


@dataclass(frozen=True)
class Joint:
    axis: tuple[float, float, float]
    offset: tuple[float, float, float]
    limits: tuple[float, float]


def _default_joints():
    # ~1.0 m reach from the shoulder; shoulder 0.30 m above the ground plane of frame A.
    return (
        Joint((0, 0, 1), (0.0, 0.0, 0.25), (-2.6, 2.6)),
        Joint((0, 1, 0), (0.0, 0.0, 0.05), (-2.6, 0.6)),
        Joint((0, 1, 0), (0.45, 0.0, 0.0), (-0.3, 2.8)),
        Joint((0, 1, 0), (0.40, 0.0, 0.0), (-1.6, 1.6)),
        Joint((0, 0, 1), (0.07, 0.0, 0.0), (-1.5, 1.5)),
        Joint((1, 0, 0), (0.04, 0.0, 0.0), (-2.8, 2.8)),
    )


@dataclass(frozen=True)
class ArmModel:
    joints: tuple = field(default_factory=_default_joints)
    tool_offset: tuple[float, float, float] = (0.04, 0.0, 0.0)
    ee_radius: float = 0.04
    home: tuple = (0.0, -1.78, 1.68, 0.3, 0.0, 0.0)

    def __post_init__(self):
        if len(self.joints) != 6:
            raise ValueError("arm must have exactly 6 revolute joints")
        for j in self.joints:
            if not j.limits[0] < j.limits[1]:
                raise ValueError("joint limits must satisfy lo < hi")
            if not np.all(np.isfinite(j.offset)):
                raise ValueError("link offsets must be finite")
            n = np.linalg.norm(j.axis)
            if abs(n - 1.0) > 1e-9:
                raise ValueError("joint axes must be unit vectors")

    @property
    def lower(self) -> np.ndarray:
        return np.array([j.limits[0] for j in self.joints])

    @property
    def upper(self) -> np.ndarray:
        return np.array([j.limits[1] for j in self.joints])

    @property
    def reach_after(self) -> np.ndarray:
        """Upper bound of the distance from each joint axis to the end-effector."""
        lengths = [np.linalg.norm(j.offset) for j in self.joints[1:]] + [np.linalg.norm(self.tool_offset)]
        return np.array([sum(lengths[i:]) for i in range(6)])

    @classmethod
    def from_config(cls, cfg: dict) -> ArmModel:
        joints = tuple(Joint(tuple(j["axis"]), tuple(j["offset"]), tuple(j["limits"])) for j in cfg["joints"])
        return cls(joints, tuple(cfg.get("tool_offset", (0.04, 0, 0))), float(cfg.get("ee_radius", 0.04)),
                   tuple(cfg.get("home", cls.home)))


@lru_cache(maxsize=64)
def _skew_terms(axis: tuple):
    ax = np.asarray(axis, dtype=float)
    k = np.array([[0, -ax[2], ax[1]], [ax[2], 0, -ax[0]], [-ax[1], ax[0], 0]])
    return k, k @ k


def _axis_rotation(axis, angle: np.ndarray) -> np.ndarray:
    """Rodrigues rotation matrices for a fixed unit axis and an array of angles."""
    k, kk = _skew_terms(tuple(float(a) for a in axis))
    s = np.sin(angle)[..., None, None]
    c = np.cos(angle)[..., None, None]
    return _EYE3 + s * k + (1 - c) * kk


def rotation_to_ypr(rot: np.ndarray) -> np.ndarray:
    """Z-Y-X Euler angles (yaw, pitch, roll) of rotation matrices."""
    yaw = np.arctan2(rot[..., 1, 0], rot[..., 0, 0])
    pitch = np.arcsin(np.clip(-rot[..., 2, 0], -1.0, 1.0))
    roll = np.arctan2(rot[..., 2, 1], rot[..., 2, 2])
    return np.stack([yaw, pitch, roll], axis=-1)


def fk_batch(arm: ArmModel, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Positions (..., 3) and rotations (..., 3, 3) of the end-effector in frame A."""
    q = np.asarray(q, dtype=float)
    lead = q.shape[:-1]
    pos = np.zeros(lead + (3,))
    rot = np.broadcast_to(np.eye(3), lead + (3, 3))
    for i, j in enumerate(arm.joints):
        pos = pos + rot @ np.asarray(j.offset, dtype=float)
        rot = rot @ _axis_rotation(j.axis, q[..., i])
    pos = pos + rot @ np.asarray(arm.tool_offset, dtype=float)
    return pos, rot


def clamp_joints(arm: ArmModel, q: np.ndarray) -> tuple[np.ndarray, bool]:
    qc = np.clip(q, arm.lower, arm.upper)
    return qc, bool(np.any(qc != q))


def forward_kinematics(arm: ArmModel, q) -> tuple[Pose6, bool]:
    """End-effector pose in frame A; joints outside their limits are clamped (flag returned)."""
    q, clamped = clamp_joints(arm, np.asarray(q, dtype=float))
    pos, rot = fk_batch(arm, q)
    return Pose6(tuple(pos), tuple(rotation_to_ypr(rot))), clamped


# ------------------------------------------------------------------ contact

@dataclass(frozen=True)
class ContactState:
    active: bool = False
    point: tuple = (0.0, 0.0, 0.0)
    normal: tuple = (1.0, 0.0, 0.0)
    penetration: float = 0.0


def contact_batch(center, radius, obj_xy, obj_yaw, dims, shape):
    """Sphere-vs-upright-object closest-point contact.

    ``dims`` rows hold (lx, ly, lz) for boxes and (diameter, diameter, height)
    for cylinders; objects rest on the ground so their CoM sits at lz/2.
    Returns (active, point, normal_into_object, penetration), all batched.
    """
    center = np.atleast_2d(center)
    n = center.shape[0]
    c, s = np.cos(obj_yaw), np.sin(obj_yaw)
    half = 0.5 * np.asarray(dims, dtype=float)
    rel = center - np.column_stack([obj_xy, half[:, 2]])
    local = np.column_stack([c * rel[:, 0] + s * rel[:, 1], -s * rel[:, 0] + c * rel[:, 1], rel[:, 2]])

    closest = np.empty_like(local)
    normal_l = np.zeros_like(local)
    inside = np.zeros(n, dtype=bool)
    depth = np.zeros(n)

    isbox = np.asarray(shape) == BOX
    if isbox.any():
        lb, hb = local[isbox], half[isbox]
        cl = np.clip(lb, -hb, hb)
        closest[isbox] = cl
        d = lb - cl
        dist = np.linalg.norm(d, axis=1)
        out = dist > 0
        nl = np.zeros_like(lb)
        nl[out] = -d[out] / dist[out, None]
        # centre inside (or on) the box: push out through the nearest face
        gap = hb - np.abs(lb)
        k = np.argmin(gap, axis=1)
        rows = np.nonzero(~out)[0]
        sgn = np.where(lb[rows, k[rows]] >= 0, 1.0, -1.0)
        nl[rows, k[rows]] = -sgn
        cl2 = cl[rows].copy()
        cl2[np.arange(len(rows)), k[rows]] = sgn * hb[rows, k[rows]]
        cl[rows] = cl2
        closest[isbox] = cl
        normal_l[isbox] = nl
        inside[isbox] = ~out
        depth[isbox] = np.where(out, -dist, gap[np.arange(len(k)), k])

    iscyl = ~isbox
    if iscyl.any():
        lc, hc = local[iscyl], half[iscyl]
        r = hc[:, 0]
        rho = np.hypot(lc[:, 0], lc[:, 1])
        safe = np.where(rho > 0, rho, 1.0)
        ux = np.where(rho > 0, lc[:, 0] / safe, 1.0)
        uy = np.where(rho > 0, lc[:, 1] / safe, 0.0)
        rc = np.minimum(rho, r)
        zc = np.clip(lc[:, 2], -hc[:, 2], hc[:, 2])
        cl = np.column_stack([rc * ux, rc * uy, zc])
        d = lc - cl
        dist = np.linalg.norm(d, axis=1)
        out = dist > 0
        nl = np.zeros_like(lc)
        nl[out] = -d[out] / dist[out, None]
        lat_gap = r - rho
        cap_gap = hc[:, 2] - np.abs(lc[:, 2])
        use_lat = lat_gap <= cap_gap
        ins = ~out
        # lateral surface normal passes through the axis
        nl[ins & use_lat] = -np.column_stack([ux, uy, np.zeros_like(ux)])[ins & use_lat]
        zs = np.where(lc[:, 2] >= 0, 1.0, -1.0)
        nl[ins & ~use_lat] = np.column_stack([np.zeros_like(zs), np.zeros_like(zs), -zs])[ins & ~use_lat]
        cl[ins & use_lat, 0] = (r * ux)[ins & use_lat]
        cl[ins & use_lat, 1] = (r * uy)[ins & use_lat]
        cl[ins & ~use_lat, 2] = (zs * hc[:, 2])[ins & ~use_lat]
        closest[iscyl] = cl
        normal_l[iscyl] = nl
        inside[iscyl] = ins
        depth[iscyl] = np.where(out, -dist, np.minimum(lat_gap, cap_gap))

    # depth: negative distance outside, inward depth inside
    pen = radius + depth
    active = pen > 0
    world_pt = np.column_stack([c * closest[:, 0] - s * closest[:, 1], s * closest[:, 0] + c * closest[:, 1],
                                closest[:, 2]]) + np.column_stack([obj_xy, half[:, 2]])
    world_n = np.column_stack([c * normal_l[:, 0] - s * normal_l[:, 1], s * normal_l[:, 0] + c * normal_l[:, 1],
                               normal_l[:, 2]])
    return active, world_pt, world_n, np.maximum(pen, 0.0)


def _obj_arrays(obj: MovableObject):
    if obj.shape == "box":
        dims = np.array([obj.dims])
        shape = np.array([BOX])
    else:
        dims = np.array([[obj.dims[0], obj.dims[0], obj.dims[1]]])
        shape = np.array([CYLINDER])
    return np.array([obj.pose.position[:2]]), np.array([obj.pose.yaw]), dims, shape


def detect_contact(ee_position, ee_radius: float, obj: MovableObject) -> ContactState:
    """Closest-point test between the pusher sphere and an upright object."""
    xy, yaw, dims, shape = _obj_arrays(obj)
    pos = ee_position.position if isinstance(ee_position, Pose6) else ee_position
    active, pt, nrm, pen = contact_batch(np.array([pos], dtype=float), ee_radius, xy, yaw, dims, shape)
    if not active[0]:
        return ContactState(False, tuple(pt[0]), tuple(nrm[0]), 0.0)
    return ContactState(True, tuple(pt[0]), tuple(nrm[0]), float(pen[0]))


# ------------------------------------------------------------------ pushing

@dataclass(frozen=True)
class PushParams:
    mu_ground: float = 0.7
    limit_surface_c: float = 0.05
    max_tilt: float = 0.52
    mu_pusher: float = 0.5

    def __post_init__(self):
        if not self.limit_surface_c > 0:
            raise ValueError("limit_surface_c must be positive")


class TipOver(Exception):
    """Signals that a push would topple the object."""


def support_halfwidth(dims, shape, obj_yaw, direction_xy) -> np.ndarray:
    """Half-width of the support base measured along a planar push direction."""
    dims = np.atleast_2d(dims)
    direction_xy = np.atleast_2d(direction_xy)
    ang = np.arctan2(direction_xy[:, 1], direction_xy[:, 0]) - obj_yaw
    hw_box = 0.5 * (dims[:, 0] * np.abs(np.cos(ang)) + dims[:, 1] * np.abs(np.sin(ang)))
    return np.where(np.asarray(shape) == BOX, hw_box, 0.5 * dims[:, 0])


def tip_check(contact_height, halfwidth, mu_ground):
    """'tip' iff mu * contact height exceeds the support half-width along the push, else 'slide'.

    Quasi-static moment balance about the leading base edge: the sliding
    friction load mu*m*g sets the pushing force, so mass cancels.
    """
    tips = np.asarray(mu_ground) * np.asarray(contact_height) > np.asarray(halfwidth)
    if np.ndim(tips) == 0:
        return "tip" if tips else "slide"
    return np.where(tips, "tip", "slide")


def push_twist_batch(contact_xy, obj_xy, normal_xy, disp_xy, c, mu_pusher):
    """Planar object displacement (dx, dy, dyaw) for small pusher displacements.

    Ellipsoidal limit surface: twist = (f, (r x f)/c^2) up to scale, so the
    contact-point velocity is M f with M = I + q q^T / c^2, q = perp(r).
    Sticking contact solves M f = d; otherwise the force sits on the
    friction-cone edge and is scaled to match the normal displacement.
    """
    n = normal_xy / np.linalg.norm(normal_xy, axis=1, keepdims=True)
    t = np.column_stack([-n[:, 1], n[:, 0]])
    r = contact_xy - obj_xy
    q = np.column_stack([-r[:, 1], r[:, 0]])
    c2 = np.broadcast_to(np.asarray(c, dtype=float) ** 2, (len(n),))
    dn = np.einsum("ij,ij->i", disp_xy, n)

    qd = np.einsum("ij,ij->i", q, disp_xy)
    qq = np.einsum("ij,ij->i", q, q)
    f_stick = disp_xy - q * (qd / (c2 + qq))[:, None]
    fn = np.einsum("ij,ij->i", f_stick, n)
    ft = np.einsum("ij,ij->i", f_stick, t)
    mu = np.broadcast_to(np.asarray(mu_pusher, dtype=float), (len(n),))
    stick = np.abs(ft) <= mu * fn

    f_edge = n + (np.sign(ft) * mu)[:, None] * t
    mf = f_edge + q * (np.einsum("ij,ij->i", q, f_edge) / c2)[:, None]
    k = dn / np.einsum("ij,ij->i", n, mf)
    f = np.where(stick[:, None], f_stick, f_edge * k[:, None])

    moving = dn > 0
    f = np.where(moving[:, None], f, 0.0)
    dyaw = np.einsum("ij,ij->i", q, f) / c2
    return f[:, 0], f[:, 1], dyaw


def push_step(obj: MovableObject, contact: ContactState, ee_displacement, params: PushParams, dt: float):
    """Move ``obj`` in response to the pusher moving by ``ee_displacement``.

    Returns (new object, planar velocity). Raises TipOver (carrying the
    toppled object as ``exc.obj``) when the slide/tip test says tip.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not contact.active:
        return obj, np.zeros(2)
    nrm = np.asarray(contact.normal, dtype=float)
    nxy = nrm[:2]
    if np.linalg.norm(nxy) < 1e-9:
        return obj, np.zeros(2)
    nxy = nxy / np.linalg.norm(nxy)
    disp = np.asarray(ee_displacement, dtype=float)[:2]
    if disp @ nxy <= 0:
        return obj, np.zeros(2)
    xy, yaw, dims, shape = _obj_arrays(obj)
    hw = support_halfwidth(dims, shape, yaw, nxy[None])[0]
    if tip_check(contact.point[2], hw, params.mu_ground) == "tip":
        exc = TipOver("object topples")
        exc.obj = tipped(obj, hw)
        raise exc
    dx, dy, dyaw = push_twist_batch(np.array([contact.point[:2]]), xy, nxy[None], disp[None],
                                    params.limit_surface_c, params.mu_pusher)
    p = obj.pose.position
    o = obj.pose.orientation
    new = replace(obj, pose=Pose6((p[0] + dx[0], p[1] + dy[0], p[2]), (wrap_angle(o[0] + dyaw[0]), o[1], o[2])))
    return new, np.array([dx[0], dy[0]]) / dt


def tipped(obj: MovableObject, halfwidth: float) -> MovableObject:
    """The object lying on its side after toppling about its leading edge."""
    p = obj.pose.position
    return replace(obj, tilt=math.pi / 2, pose=Pose6((p[0], p[1], halfwidth), obj.pose.orientation))


# ------------------------------------------------------------ randomization

@dataclass(frozen=True)
class RandomizationRanges:
    mass: tuple[float, float] = (0.5, 3.0)
    mu_ground: tuple[float, float] = (0.5, 1.0)
    arm_added_mass: tuple[float, float] = (-1.0, 1.0)


def randomize_physics(rng: np.random.Generator, ranges: RandomizationRanges = RandomizationRanges()):
    """Sample (object mass, ground friction, arm added mass), in that draw order."""
    mass = rng.uniform(*ranges.mass)
    mu = rng.uniform(*ranges.mu_ground)
    added = rng.uniform(*ranges.arm_added_mass)
    return float(mass), float(mu), float(added)


def action_effectiveness(added_mass):
    """Map arm added mass in [-1, 1] kg to a joint-increment scale in [0.9, 1.1]."""
    return 1.0 - 0.1 * np.clip(added_mass, -1.0, 1.0)
