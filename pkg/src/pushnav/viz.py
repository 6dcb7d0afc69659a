"""Minimal SVG rendering for maps, plans, trajectories and learning curves."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .world import Scenario, box_corners

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


class Canvas:
    def __init__(self, width_m: float, height_m: float, scale: float = 60.0, pad: float = 10.0):
        self.w, self.h, self.s, self.pad = width_m, height_m, scale, pad
        self.items: list[str] = []

    def _p(self, x, y) -> str:
        return f"{self.pad + x * self.s:.2f},{self.pad + (self.h - y) * self.s:.2f}"

    def polygon(self, pts, fill="#888", stroke="none", opacity=1.0):
        path = " ".join(self._p(x, y) for x, y in pts)
        self.items.append(f'<polygon points="{path}" fill="{fill}" stroke="{stroke}" fill-opacity="{opacity}"/>')

    def polyline(self, pts, stroke="#000", width=2.0, dash=None):
        path = " ".join(self._p(x, y) for x, y in pts)
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(f'<polyline points="{path}" fill="none" stroke="{stroke}" stroke-width="{width}"{d}/>')

    def circle(self, x, y, r_px=4.0, fill="#000"):
        cx, cy = self._p(x, y).split(",")
        self.items.append(f'<circle cx="{cx}" cy="{cy}" r="{r_px}" fill="{fill}"/>')

    def text(self, x, y, label, size=12):
        px, py = self._p(x, y).split(",")
        self.items.append(f'<text x="{px}" y="{py}" font-size="{size}" font-family="sans-serif">{escape(label)}</text>')

    def render(self) -> str:
        W = 2 * self.pad + self.w * self.s
        H = 2 * self.pad + self.h * self.s
        body = "\n".join(self.items)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" height="{H:.0f}" '
                f'viewBox="0 0 {W:.0f} {H:.0f}">\n<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n')


def _scene(sc: Scenario) -> Canvas:
    c = Canvas(sc.map.width_m, sc.map.height_m)
    for r in sc.statics:
        x0, y0, x1, y1 = r.bounds
        c.polygon([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], fill="#555")
    c.circle(sc.start.x, sc.start.y, 5, "#2ca02c")
    c.circle(sc.goal.x, sc.goal.y, 5, "#d62728")
    c.text(sc.goal.x + 0.1, sc.goal.y + 0.1, "goal")
    return c


def _object(c: Canvas, obj, fill, opacity):
    c.polygon(list(obj.footprint_polygon().exterior.coords), fill=fill, opacity=opacity, stroke="#000")


def plan_svg(sc: Scenario, plan) -> str:
    c = _scene(sc)
    for b in plan.corridor:
        c.polygon([(b.x_lo, b.y_lo), (b.x_hi, b.y_lo), (b.x_hi, b.y_hi), (b.x_lo, b.y_hi)], fill="#9ecae1",
                  opacity=0.25)
    for o in sc.movables:
        _object(c, o, "#ff7f0e", 0.8)
    c.polyline(plan.coarse.xy, stroke="#999", width=1.5, dash="4,3")
    c.polyline(plan.smooth.points, stroke="#1f77b4", width=2.5)
    return c.render()


def trajectory_svg(sc: Scenario, report, plans=()) -> str:
    """Executed base trajectory with pushed objects at their first and last logged poses."""
    c = _scene(sc)
    for p in plans:
        c.polyline(p.smooth.points, stroke="#bbb", width=1.0, dash="3,3")
    first, last = {}, {}
    for t, i, x, y, yaw, tilt in report.objects:
        first.setdefault(i, (x, y, yaw))
        last[i] = (x, y, yaw)
    for i, o in enumerate(sc.movables):
        _object(c, o, "#ff7f0e", 0.35)
        if i in last and last[i] != first.get(i):
            _object(c, o.moved_to(*last[i]), "#ff7f0e", 0.9)
    traj = np.array([(x, y) for _, x, y, _, _ in report.trajectory]) if report.trajectory else np.zeros((0, 2))
    if len(traj) > 1:
        c.polyline(traj, stroke="#1f77b4", width=2.5)
    if len(traj):
        x, y = traj[-1]
        yaw = report.trajectory[-1][3]
        c.polygon(box_corners(x, y, yaw, *sc.footprint), fill="none", stroke="#1f77b4")
    c.text(0.2, sc.map.height_m - 0.3, f"outcome: {report.outcome}")
    return c.render()


def curves_svg(curves: dict, key: str = "success_rate", width: float = 640, height: float = 360) -> str:
    """Line chart of one curve-log column per labelled run."""
    pad = 50.0
    xs = [r.env_steps for rows in curves.values() for r in rows] or [1]
    ys = [getattr(r, key) for rows in curves.values() for r in rows] or [0.0]
    x_hi = max(xs) or 1
    y_lo, y_hi = min(ys + [0.0]), max(ys + [1e-9])
    span = (y_hi - y_lo) or 1.0

    def p(x, y):
        return f"{pad + (width - 2 * pad) * x / x_hi:.2f},{height - pad - (height - 2 * pad) * (y - y_lo) / span:.2f}"

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}">',
             '<rect width="100%" height="100%" fill="white"/>',
             f'<polyline points="{p(0, y_lo)} {p(x_hi, y_lo)}" stroke="#000" fill="none"/>',
             f'<polyline points="{p(0, y_lo)} {p(0, y_hi)}" stroke="#000" fill="none"/>',
             f'<text x="{width / 2:.0f}" y="{height - 12:.0f}" font-size="12" font-family="sans-serif">env steps</text>',
             f'<text x="8" y="20" font-size="12" font-family="sans-serif">{escape(key)} [{y_lo:.3g}, {y_hi:.3g}]</text>']
    for k, (label, rows) in enumerate(sorted(curves.items())):
        color = COLORS[k % len(COLORS)]
        if rows:
            pts = " ".join(p(r.env_steps, getattr(r, key)) for r in rows)
            parts.append(f'<polyline points="{pts}" stroke="{color}" stroke-width="2" fill="none"/>')
        parts.append(f'<text x="{width - 200:.0f}" y="{30 + 16 * k}" font-size="12" fill="{color}" '
                     f'font-family="sans-serif">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
