"""Guarded mazes: a short route past a random-cost guard and a long route around it."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .base import Env, EnvSpec

# up, down, left, right in (row, col) offsets; row 0 is the top line of the layout file
MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))
# how far inside its cell an agent is held when clamped against a wall
_EDGE = 1e-6


@dataclass(frozen=True)
class MazeLayout:
    rows: tuple[str, ...]
    start: tuple[int, int]
    goal: tuple[int, int]
    guards: frozenset

    @classmethod
    def parse(cls, text: str) -> "MazeLayout":
        # comment lines start with "# "; wall rows are runs of '#'
        rows = tuple(line.rstrip() for line in text.splitlines() if line.strip() and not line.startswith("# "))
        if len({len(r) for r in rows}) != 1:
            raise ValueError("maze rows must all have the same width")
        bad = set("".join(rows)) - set("#.SGX")
        if bad:
            raise ValueError(f"unknown maze characters {sorted(bad)}")
        cells = {(r, c): ch for r, row in enumerate(rows) for c, ch in enumerate(row)}
        starts = [p for p, ch in cells.items() if ch == "S"]
        goals = [p for p, ch in cells.items() if ch == "G"]
        if len(starts) != 1 or len(goals) != 1:
            raise ValueError("maze needs exactly one 'S' and one 'G'")
        guards = frozenset(p for p, ch in cells.items() if ch == "X")
        return cls(rows, starts[0], goals[0], guards)

    @classmethod
    def load(cls, name: str) -> "MazeLayout":
        return cls.parse(resources.files("retcap.envs").joinpath(f"data/{name}.txt").read_text())

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.rows[0])

    def is_wall(self, cell) -> bool:
        r, c = cell
        h, w = self.shape
        return not (0 <= r < h and 0 <= c < w) or self.rows[r][c] == "#"

    def shortest_path(self, avoid_guard: bool = False) -> list[tuple[int, int]] | None:
        """Cells from start to goal (inclusive) by BFS, or None if unreachable."""
        prev = {self.start: None}
        queue = deque([self.start])
        while queue:
            cur = queue.popleft()
            if cur == self.goal:
                path = [cur]
                while prev[path[-1]] is not None:
                    path.append(prev[path[-1]])
                return path[::-1]
            for dr, dc in MOVES:
                nxt = (cur[0] + dr, cur[1] + dc)
                if nxt in prev or self.is_wall(nxt) or (avoid_guard and nxt in self.guards):
                    continue
                prev[nxt] = cur
                queue.append(nxt)
        return None

    def actions_along(self, path) -> list[int]:
        return [MOVES.index((b[0] - a[0], b[1] - a[1])) for a, b in zip(path, path[1:])]


class DiscreteGuardedMaze(Env):
    """Grid maze with one-hot observations.

    -1 per step, +10 on reaching the goal. Each entry into a guard cell subtracts
    a signed N(0, 1) * 30 draw. Blocked moves keep the agent in place and still cost -1.
    """

    STEP_COST = 1.0
    GOAL_REWARD = 10.0
    GUARD_SCALE = 30.0

    def __init__(self, layout: MazeLayout | None = None, max_steps: int = 100):
        super().__init__()
        self.layout = layout or MazeLayout.load("maze_discrete")
        h, w = self.layout.shape
        self.spec = EnvSpec("maze_discrete", h * w, 4, max_steps, 32.0)
        self.pos = self.layout.start
        self._forced = None

    def _obs(self) -> np.ndarray:
        obs = np.zeros(self.spec.observation_dim)
        obs[self.pos[0] * self.layout.shape[1] + self.pos[1]] = 1.0
        return obs

    def _reset(self) -> np.ndarray:
        self.pos = self.layout.start
        return self._obs()

    def step(self, action: int, guard_draw: float | None = None):
        """``guard_draw`` replaces the standard-normal draw if this step enters a guard cell."""
        self._forced = guard_draw
        try:
            return super().step(action)
        finally:
            self._forced = None

    def _step(self, action: int):
        dr, dc = MOVES[action]
        nxt = (self.pos[0] + dr, self.pos[1] + dc)
        reward = -self.STEP_COST
        if not self.layout.is_wall(nxt):
            entered_guard = nxt in self.layout.guards and nxt != self.pos
            self.pos = nxt
            if entered_guard:
                z = self.rng.standard_normal() if self._forced is None else self._forced
                reward -= self.GUARD_SCALE * z
        if self.pos == self.layout.goal:
            return self._obs(), reward + self.GOAL_REWARD, True
        return self._obs(), reward, False


class ContinuousGuardedMaze(Env):
    """Continuous-position maze: each layout cell is a 1x1 square.

    Actions move a fixed step plus Gaussian noise; movement is resolved one axis
    at a time and clamped just short of the first wall cell it would cross. -1 per step, +16 on entering the goal
    cell. With probability 0.2 per episode the guard is present, and the first
    entry into a guard cell then costs an Exp(mean 32) draw.
    """

    STEP_COST = 1.0
    GOAL_REWARD = 16.0
    GUARD_PROB = 0.2
    GUARD_MEAN = 32.0

    def __init__(self, layout: MazeLayout | None = None, step_length: float = 1.0,
                 noise_std: float = 0.1, max_steps: int = 161):
        super().__init__()
        self.layout = layout or MazeLayout.load("maze_continuous")
        self.step_length = step_length
        self.noise_std = noise_std * step_length
        self.spec = EnvSpec("maze_continuous", 2, 4, max_steps, 32.0)
        self.xy = np.zeros(2)
        self.guard_present = False
        self.guard_paid = False

    def cell(self, xy=None) -> tuple[int, int]:
        x, y = self.xy if xy is None else xy
        return int(np.floor(y)), int(np.floor(x))

    def _slide(self, coord: float, d: float, cell_at) -> float:
        cur, end = int(np.floor(coord)), int(np.floor(coord + d))
        step = 1 if d > 0 else -1
        while cur != end:
            if self.layout.is_wall(cell_at(cur + step)):
                return cur + 1.0 - _EDGE if d > 0 else cur + _EDGE
            cur += step
        return coord + d

    def _obs(self) -> np.ndarray:
        h, w = self.layout.shape
        return np.array([self.xy[0] / w, self.xy[1] / h])

    def _reset(self) -> np.ndarray:
        r, c = self.layout.start
        self.xy = np.array([c + 0.5, r + 0.5])
        self.guard_present = bool(self.rng.random() < self.GUARD_PROB)
        self.guard_paid = False
        return self._obs()

    def _step(self, action: int):
        dr, dc = MOVES[action]
        noise = self.rng.normal(0.0, self.noise_std, 2)
        delta = np.array([dc, dr]) * self.step_length + noise
        x = self._slide(self.xy[0], delta[0], lambda k: (int(np.floor(self.xy[1])), k))
        self.xy = np.array([x, self.xy[1]])
        y = self._slide(self.xy[1], delta[1], lambda k: (k, int(np.floor(self.xy[0]))))
        self.xy = np.array([x, y])
        reward = -self.STEP_COST
        here = self.cell()
        if self.guard_present and not self.guard_paid and here in self.layout.guards:
            self.guard_paid = True
            reward -= self.rng.exponential(self.GUARD_MEAN)
        if here == self.layout.goal:
            return self._obs(), reward + self.GOAL_REWARD, True
        return self._obs(), reward, False
