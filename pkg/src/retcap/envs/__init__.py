from .av import AutonomousVehicle, RoadGraph
from .base import AugmentedEnv, AugmentedObservation, Env, EnvSpec, Transition, augment
from .betting import BettingGame
from .maze import ContinuousGuardedMaze, DiscreteGuardedMaze, MazeLayout

ENVIRONMENTS = {
    "betting": BettingGame,
    "av": AutonomousVehicle,
    "maze_discrete": DiscreteGuardedMaze,
    "maze_continuous": ContinuousGuardedMaze,
}


def make_env(name: str, augmented: bool = True) -> Env:
    try:
        env = ENVIRONMENTS[name]()
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    return augment(env) if augmented else env


__all__ = [
    "AugmentedEnv",
    "AugmentedObservation",
    "AutonomousVehicle",
    "BettingGame",
    "ContinuousGuardedMaze",
    "DiscreteGuardedMaze",
    "ENVIRONMENTS",
    "Env",
    "EnvSpec",
    "MazeLayout",
    "RoadGraph",
    "Transition",
    "augment",
    "make_env",
]
