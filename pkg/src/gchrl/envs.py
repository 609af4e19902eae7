"""Point-mass maze environments and a tabular chain MDP.

The mazes replace articulated MuJoCo bodies with a velocity-integrated
point mass (dt=0.1, v_max=2.0, a_max=1.0 per axis) inside axis-aligned
wall rectangles. Geometry, sparse reward, horizon and goal placement
follow the original maze tasks; collision is resolved per axis with a
clamp at the nearest wall face, which cannot tunnel regardless of
speed because the clamp triggers on face crossing, not on endpoint
overlap.

State is (x, y, vx, vy); the goal space is the position (x, y).
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

GOAL_INDICES = (0, 1)


@dataclass
class MazeLayout:
    name: str
    bounds: tuple[float, float, float, float]      # x0, y0, x1, y1
    walls: list[tuple[float, float, float, float]]
    start: tuple[float, float] | None              # None: uniform over free space
    eval_goal: tuple[float, float]
    train_goal: tuple[float, float] | None = None  # None: uniform over free space

    @property
    def size(self):
        x0, y0, x1, y1 = self.bounds
        return (x1 - x0, y1 - y0)

    def in_free_space(self, x, y):
        x0, y0, x1, y1 = self.bounds
        if not (x0 <= x <= x1 and y0 <= y <= y1):
            return False
        for (wx0, wy0, wx1, wy1) in self.walls:
            if wx0 < x < wx1 and wy0 < y < wy1:
                return False
        return True

    def validate(self):
        x0, y0, x1, y1 = self.bounds
        for w in self.walls:
            if not (x0 <= w[0] < w[2] <= x1 and y0 <= w[1] < w[3] <= y1):
                raise ValueError(f"wall {w} outside bounds or degenerate")
        if self.start is not None and not self.in_free_space(*self.start):
            raise ValueError("start is not in free space")
        if not self.in_free_space(*self.eval_goal):
            raise ValueError("eval goal is not in free space")
        if self.train_goal is not None and not self.in_free_space(*self.train_goal):
            raise ValueError("train goal is not in free space")
        return self


def _u_shape(scale=1.0, name="point_maze_u"):
    # one horizontal block forces the detour right - up - left
    s = scale
    return MazeLayout(
        name=name,
        bounds=(-2 * s, -2 * s, 10 * s, 10 * s),
        walls=[(-2 * s, 2 * s, 6 * s, 6 * s)],
        start=(0.0, 0.0),
        eval_goal=(0.0, 8 * s),
    )


def _bottleneck():
    lay = _u_shape(name="point_maze_bottleneck")
    # second block leaves a 1-unit-wide passage at x in [6, 7]
    lay.walls.append((7.0, 2.0, 10.0, 6.0))
    return lay


def _w_shape():
    # two interleaved blocks, passages on alternating sides
    return MazeLayout(
        name="point_maze_w",
        bounds=(-2.0, -2.0, 18.0, 18.0),
        walls=[(-2.0, 2.0, 10.0, 6.0), (6.0, 10.0, 18.0, 14.0)],
        start=None,  # random free-space starts
        eval_goal=(0.0, 8.0),
    )


LAYOUTS = {
    "point_maze_u": _u_shape,
    "point_maze_u_large": lambda: _u_shape(scale=2.0, name="point_maze_u_large"),
    "point_maze_w": _w_shape,
    "point_maze_bottleneck": _bottleneck,
}


def load_layout(path):
    """Read a layout from a .json file or a plain-text grid.

    JSON keys: name, bounds [x0,y0,x1,y1], walls [[x0,y0,x1,y1], ...],
    start [x,y] or "uniform", eval_goal [x,y], train_goal [x,y] or
    "uniform".

    Grid files hold optional "key: value" header lines (cell, origin)
    followed by rows of characters: '#' wall cell, '.' free, 'S' start,
    'G' eval goal. Row order is top to bottom.
    """
    text = open(path).read()
    if str(path).endswith(".json"):
        d = json.loads(text)
        def pt(v):
            return None if v == "uniform" else tuple(float(x) for x in v)
        lay = MazeLayout(
            name=d.get("name", "custom"),
            bounds=tuple(float(x) for x in d["bounds"]),
            walls=[tuple(float(x) for x in w) for w in d["walls"]],
            start=pt(d.get("start", "uniform")),
            eval_goal=tuple(float(x) for x in d["eval_goal"]),
            train_goal=pt(d.get("train_goal", "uniform")),
        )
        return lay.validate()
    cell = 1.0
    ox, oy = 0.0, 0.0
    rows = []
    for line in text.splitlines():
        if ":" in line and not rows:
            key, val = line.split(":", 1)
            if key.strip() == "cell":
                cell = float(val)
            elif key.strip() == "origin":
                ox, oy = (float(v) for v in val.split(","))
            continue
        if line.strip():
            rows.append(line.rstrip("\n"))
    h = len(rows)
    w = max(len(r) for r in rows)
    walls = []
    start = None
    goal = None
    for r, row in enumerate(rows):
        y1 = oy + (h - r) * cell      # top to bottom
        y0 = y1 - cell
        for c, ch in enumerate(row):
            x0 = ox + c * cell
            if ch == "#":
                walls.append((x0, y0, x0 + cell, y0 + cell))
            elif ch == "S":
                start = (x0 + cell / 2, y0 + cell / 2)
            elif ch == "G":
                goal = (x0 + cell / 2, y0 + cell / 2)
    if goal is None:
        raise ValueError(f"grid layout {path} has no goal cell 'G'")
    lay = MazeLayout(name="custom", bounds=(ox, oy, ox + w * cell, oy + h * cell),
                     walls=walls, start=start, eval_goal=goal)
    return lay.validate()


class PointMazeEnv:
    """Deterministic point mass in a maze. Sparse reward 1 inside the
    success radius around the goal (or dense negative distance)."""

    def __init__(self, layout, seed, *, dt=0.1, v_max=2.0, a_max=1.0,
                 max_steps=600, success_radius=2.5, action_noise_prob=0.0,
                 reward_kind="sparse"):
        if reward_kind not in ("sparse", "dense"):
            raise ValueError(f"unknown reward kind {reward_kind!r}")
        self.layout = layout.validate()
        self.dt = dt
        self.v_max = v_max
        self.a_max = a_max
        self.max_steps = max_steps
        self.success_radius = success_radius
        self.action_noise_prob = action_noise_prob
        self.reward_kind = reward_kind
        self.rng = np.random.default_rng(seed)
        self._x = self._y = self._vx = self._vy = 0.0
        self._gx = self._gy = 0.0
        self._t = 0
        self._finished = True

    # -- helpers ----------------------------------------------------------

    def _sample_free(self):
        x0, y0, x1, y1 = self.layout.bounds
        while True:
            x = self.rng.uniform(x0, x1)
            y = self.rng.uniform(y0, y1)
            if self.layout.in_free_space(x, y):
                return x, y

    def _obs(self):
        return np.array([self._x, self._y, self._vx, self._vy])

    @property
    def goal(self):
        return np.array([self._gx, self._gy])

    @property
    def steps_taken(self):
        return self._t

    # -- api ---------------------------------------------------------------

    def reset(self, seed=None, eval_mode=False):
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        if self.layout.start is None:
            self._x, self._y = self._sample_free()
        else:
            self._x, self._y = self.layout.start
        self._vx = self._vy = 0.0
        if eval_mode:
            self._gx, self._gy = self.layout.eval_goal
        elif self.layout.train_goal is not None:
            self._gx, self._gy = self.layout.train_goal
        else:
            self._gx, self._gy = self._sample_free()
        self._t = 0
        self._finished = False
        return self._obs(), self.goal

    def _move_axis(self, pos, vel, other, horizontal):
        """Advance one coordinate by vel*dt, clamping at the nearest
        blocking face; returns (new_pos, new_vel)."""
        x0b, y0b, x1b, y1b = self.layout.bounds
        lo, hi = (x0b, x1b) if horizontal else (y0b, y1b)
        new = pos + vel * self.dt
        blocked = False
        if new < lo:
            new, blocked = lo, True
        elif new > hi:
            new, blocked = hi, True
        for (wx0, wy0, wx1, wy1) in self.layout.walls:
            if horizontal:
                n0, n1, o0, o1 = wx0, wx1, wy0, wy1
            else:
                n0, n1, o0, o1 = wy0, wy1, wx0, wx1
            if not (o0 < other < o1):
                continue
            if vel > 0 and pos <= n0 < new:
                new, blocked = n0, True
            elif vel < 0 and pos >= n1 > new:
                new, blocked = n1, True
        return new, (0.0 if blocked else vel)

    def step(self, a):
        if self._finished:
            raise RuntimeError("step() after episode finished; call reset()")
        a = np.asarray(a, dtype=np.float64)
        if self.action_noise_prob > 0.0 and self.rng.random() < self.action_noise_prob:
            a = self.rng.uniform(-self.a_max, self.a_max, size=2)
        ax = float(np.clip(a[0], -self.a_max, self.a_max))
        ay = float(np.clip(a[1], -self.a_max, self.a_max))
        self._vx = float(np.clip(self._vx + ax * self.dt, -self.v_max, self.v_max))
        self._vy = float(np.clip(self._vy + ay * self.dt, -self.v_max, self.v_max))
        self._x, self._vx = self._move_axis(self._x, self._vx, self._y, True)
        self._y, self._vy = self._move_axis(self._y, self._vy, self._x, False)
        self._t += 1
        dist = np.hypot(self._x - self._gx, self._y - self._gy)
        success = bool(dist <= self.success_radius)
        reward = (1.0 if success else 0.0) if self.reward_kind == "sparse" else -float(dist)
        done = success or self._t >= self.max_steps
        self._finished = done
        return self._obs(), reward, done, success


@dataclass
class ChainMDP:
    """Deterministic 1-D chain: s' = clip(s + round(a), 0, n-1).

    Exists so relabeling can be checked against exhaustive enumeration.
    """
    n_states: int
    goal: int = 0

    def step(self, s, a):
        return int(np.clip(int(s) + int(round(float(a))), 0, self.n_states - 1))

    def all_transitions(self):
        return [(s, a, self.step(s, a))
                for s in range(self.n_states) for a in (-1, 0, 1)]
