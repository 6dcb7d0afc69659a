import json
import math

import numpy as np
import pytest

from pushnav.world import GridMap, Pose2, Rect, Scenario


def make_scenario(width=5.0, height=5.0, res=0.1, statics=(), movables=(), start=(0.8, 2.5, 0.0),
                  goal=(4.0, 2.5, 0.0), seed=0):
    grid = GridMap(res, int(round(width / res)), int(round(height / res)))
    return Scenario(grid, [Rect(*r) for r in statics], list(movables), Pose2(*start), Pose2(*goal), seed)


def scenario_dict(width=5.0, height=5.0, statics=(), movables=(), start=(0.8, 2.5, 0.0), goal=(4.0, 2.5, 0.0),
                  seed=0):
    return {
        "map": {"width_m": width, "height_m": height, "resolution_m": 0.1},
        "statics": [dict(zip(("cx", "cy", "lx", "ly"), r)) for r in statics],
        "movables": list(movables),
        "start": dict(zip(("x", "y", "yaw"), start)),
        "goal": dict(zip(("x", "y", "yaw"), goal)),
        "seed": seed,
    }


@pytest.fixture
def write_json(tmp_path):
    def _write(data, name="scenario.json"):
        p = tmp_path / name
        p.write_text(json.dumps(data))
        return p
    return _write


def random_grid(rng, width=40, height=30, res=0.1, n_rects=6):
    """Occupancy grid with a few random wall rectangles."""
    occ = np.zeros((height, width), dtype=bool)
    for _ in range(n_rects):
        w = rng.integers(1, 4) if rng.random() < 0.5 else rng.integers(3, 20)
        h = rng.integers(3, 20) if w < 4 else rng.integers(1, 4)
        c0 = rng.integers(0, width - w)
        r0 = rng.integers(0, height - h)
        occ[r0:r0 + h, c0:c0 + w] = True
    return GridMap(res, width, height, occ)


def rotated_rect_contains(px, py, pose, footprint):
    """Independent point-in-oriented-rectangle test via shapely."""
    from shapely.geometry import Point, Polygon

    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    hx, hy = footprint[0] / 2, footprint[1] / 2
    corners = [(pose.x + c * a - s * b, pose.y + s * a + c * b) for a, b in ((hx, hy), (-hx, hy), (-hx, -hy),
                                                                           (hx, -hy))]
    return Polygon(corners).buffer(1e-12).contains(Point(px, py))


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
