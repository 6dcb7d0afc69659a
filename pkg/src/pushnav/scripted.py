"""Hand-written pushing controller with access to the true simulator state.

Used as a reference skill: approach from above, drop behind the object on
the goal line, then push through the centre of mass. Joint targets come
from damped least-squares steps on the position Jacobian of joints 1-4.
"""

from __future__ import annotations

import numpy as np

from . import physics
from .pushenv import VecPushEnv, extent_along

APPROACH, DESCEND, PUSH = 0, 1, 2


class ScriptedPusher:
    def __init__(self, env: VecPushEnv, push_height: float = 0.12, step_len: float = 0.025, travel_len: float = 0.05,
                 standoff: float = 0.07, damping: float = 0.05):
        self.env = env
        self.push_height = push_height
        self.step_len = step_len
        self.travel_len = travel_len
        self.standoff = standoff
        self.damping = damping
        self.phase = np.zeros(env.n, dtype=int)

    def reset(self, i: int | None = None) -> None:
        if i is None:
            self.phase[:] = APPROACH
        else:
            self.phase[i] = APPROACH

    def _jacobian(self, q: np.ndarray, eps: float = 1e-5) -> np.ndarray:
        arm = self.env.arm
        base, _ = physics.fk_batch(arm, q)
        cols = []
        for j in range(4):
            qp = q.copy()
            qp[:, j] += eps
            p, _ = physics.fk_batch(arm, qp)
            cols.append((p - base) / eps)
        return np.stack(cols, axis=2), base

    def act(self) -> np.ndarray:
        env = self.env
        n = env.n
        r_ee = env.arm.ee_radius
        d = env.goal[:, :2] - env.obj_xy
        dist = np.linalg.norm(d, axis=1)
        dhat = d / np.where(dist > 0, dist, 1.0)[:, None]
        half = 0.5 * extent_along(env.dims, env.shape, env.obj_yaw, dhat)
        h = env.dims[:, 2]
        z_push = np.minimum(self.push_height, h / 3)
        ee = env.ee_pos

        pre = env.obj_xy - (half + r_ee + self.standoff)[:, None] * dhat
        rel = ee[:, :2] - env.obj_xy
        along = np.einsum("ij,ij->i", rel, dhat)
        lateral = np.abs(rel[:, 0] * dhat[:, 1] - rel[:, 1] * dhat[:, 0])

        # re-approach when the pusher has drifted off the push line
        lost = (self.phase == PUSH) & ((lateral > 0.08) | (along > -0.5 * half))
        self.phase[lost] = APPROACH

        high = h + 0.12
        target = np.zeros((n, 3))
        for ph in (APPROACH, DESCEND, PUSH):
            m = self.phase == ph
            if not m.any():
                continue
            if ph == APPROACH:
                target[m] = np.column_stack([pre[m], high[m]])
                near = np.linalg.norm(ee[m, :2] - pre[m], axis=1) < 0.05
                self.phase[np.nonzero(m)[0][near]] = DESCEND
            elif ph == DESCEND:
                target[m] = np.column_stack([pre[m], z_push[m]])
                near = np.linalg.norm(ee[m] - target[m], axis=1) < 0.04
                self.phase[np.nonzero(m)[0][near]] = PUSH
            else:
                # slide along the goal line through the centre of mass
                ahead = env.obj_xy[m] + (along[m] + 2 * self.step_len)[:, None] * dhat[m]
                target[m] = np.column_stack([ahead, z_push[m]])

        step = target - ee
        norm = np.linalg.norm(step, axis=1, keepdims=True)
        cap = np.where(self.phase == PUSH, self.step_len, self.travel_len)[:, None]
        step = np.where(norm > cap, step * (cap / np.where(norm > 0, norm, 1.0)), step)
        jac, _ = self._jacobian(env.q)
        jjt = jac @ np.swapaxes(jac, 1, 2) + self.damping ** 2 * np.eye(3)
        dq4 = np.einsum("nji,nj->ni", jac, np.linalg.solve(jjt, step[:, :, None])[:, :, 0])
        action = np.zeros((n, 6))
        scale = env.alpha[:4]
        action[:, :4] = dq4 / scale
        return np.clip(action, -1.0, 1.0)


def run_scripted(env: VecPushEnv, max_steps: int | None = None, **kw):
    """Roll every environment once from its current state; returns cause codes."""
    pusher = ScriptedPusher(env, **kw)
    max_steps = max_steps or env.cfg.horizon
    causes = np.zeros(env.n, dtype=int)
    finished = np.zeros(env.n, dtype=bool)
    saved = env.reset_env
    env.reset_env = lambda *a, **k: None
    try:
        for _ in range(max_steps):
            a = pusher.act()
            a[finished] = 0.0
            _, _, dones, info = env.step(a)
            new = dones & ~finished
            causes[new] = info["cause"][new]
            finished |= dones
            if finished.all():
                break
    finally:
        env.reset_env = saved
    return causes
