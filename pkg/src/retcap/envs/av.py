from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .base import Env, EnvSpec

# (small, medium, large) traversal time per road type, drawn with these probabilities
ROAD_COSTS = {
    "lane": (7.0, 7.0, 8.0),
    "street": (4.0, 5.0, 11.0),
    "main": (2.0, 4.0, 13.0),
    "highway": (1.0, 2.0, 18.0),
}
COST_PROBS = (0.4, 0.3, 0.3)
GOAL_REWARD = 80.0
BLOCKED_PENALTY = 1.0
MAX_STEPS = 32

# up, down, left, right
MOVES = ((0, 1), (0, -1), (-1, 0), (1, 0))


@dataclass(frozen=True)
class RoadGraph:
    nodes: tuple[tuple[int, int], ...]
    edges: dict  # (node, node) -> road type, stored in both directions
    start: tuple[int, int]
    goal: tuple[int, int]

    @classmethod
    def parse(cls, text: str) -> "RoadGraph":
        """Parse the edge-list format: ``start x,y`` / ``goal x,y`` / ``x,y x,y type`` lines."""
        start = goal = None
        edges = {}
        nodes = set()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] in ("start", "goal") and len(parts) == 2:
                node = _node(parts[1], lineno)
                nodes.add(node)
                if parts[0] == "start":
                    start = node
                else:
                    goal = node
                continue
            if len(parts) != 3 or parts[2] not in ROAD_COSTS:
                raise ValueError(f"line {lineno}: expected 'x,y x,y road_type', got {raw!r}")
            a, b = _node(parts[0], lineno), _node(parts[1], lineno)
            if abs(a[0] - b[0]) + abs(a[1] - b[1]) != 1:
                raise ValueError(f"line {lineno}: edge {a}-{b} does not join grid neighbours")
            edges[(a, b)] = edges[(b, a)] = parts[2]
            nodes.update((a, b))
        if start is None or goal is None:
            raise ValueError("road graph needs 'start' and 'goal' lines")
        return cls(tuple(sorted(nodes)), edges, start, goal)

    @classmethod
    def default(cls) -> "RoadGraph":
        return cls.parse(resources.files("retcap.envs").joinpath("data/av_graph.txt").read_text())


def _node(tok: str, lineno: int) -> tuple[int, int]:
    try:
        x, y = tok.split(",")
        return int(x), int(y)
    except ValueError:
        raise ValueError(f"line {lineno}: bad node {tok!r}") from None


class AutonomousVehicle(Env):
    """Drive a road graph from start to goal; each traversal costs a random road-type time.

    Observation is a one-hot of the current node. Moves with no road in that
    direction leave the car in place for a fixed -1.
    """

    def __init__(self, graph: RoadGraph | None = None):
        super().__init__()
        self.graph = graph or RoadGraph.default()
        self.index = {n: i for i, n in enumerate(self.graph.nodes)}
        self.spec = EnvSpec("av", len(self.graph.nodes), 4, MAX_STEPS, GOAL_REWARD)
        self.pos = self.graph.start
        self._forced = None

    def _obs(self) -> np.ndarray:
        obs = np.zeros(len(self.graph.nodes))
        obs[self.index[self.pos]] = 1.0
        return obs

    def _reset(self) -> np.ndarray:
        self.pos = self.graph.start
        return self._obs()

    def step(self, action: int, category: int | None = None):
        """``category`` (0 small, 1 medium, 2 large) overrides the seeded cost draw."""
        self._forced = category
        try:
            return super().step(action)
        finally:
            self._forced = None

    def _step(self, action: int):
        dx, dy = MOVES[action]
        nxt = (self.pos[0] + dx, self.pos[1] + dy)
        road = self.graph.edges.get((self.pos, nxt))
        if road is None:
            return self._obs(), -BLOCKED_PENALTY, False
        u = self.rng.random()
        if self._forced is None:
            cat = 0 if u < COST_PROBS[0] else (1 if u < COST_PROBS[0] + COST_PROBS[1] else 2)
        else:
            cat = self._forced
        reward = -ROAD_COSTS[road][cat]
        self.pos = nxt
        if nxt == self.graph.goal:
            return self._obs(), reward + GOAL_REWARD, True
        return self._obs(), reward, False
