"""Environment interface shared by the desk-scale tasks, plus the running-return wrapper."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    name: str
    observation_dim: int
    action_count: int
    max_steps: int
    return_scale: float


@dataclass
class Transition:
    next_observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool


@dataclass(frozen=True)
class AugmentedObservation:
    base_observation: np.ndarray
    running_return: float
    scale: float

    @property
    def scaled_return(self) -> float:
        return self.running_return / self.scale

    @property
    def vector(self) -> np.ndarray:
        return np.append(self.base_observation, self.scaled_return)


class Env:
    """Episodic environment with a step cap.

    Subclasses implement ``_reset()`` and ``_step(action) -> (obs, reward, terminated)``
    and draw all randomness from ``self.rng``, which ``reset(seed)`` reseeds.
    Truncation is flagged here, exactly when the cap is hit on a non-terminal step.
    """

    spec: EnvSpec

    def __init__(self):
        self.rng = np.random.default_rng(0)
        self.t = 0
        self.done = True

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.t = 0
        self.done = False
        return self._reset()

    def step(self, action: int) -> Transition:
        if self.done:
            raise RuntimeError("step() on a finished episode; call reset()")
        action = int(action)
        if not 0 <= action < self.spec.action_count:
            raise ValueError(f"action {action} outside 0..{self.spec.action_count - 1}")
        obs, reward, terminated = self._step(action)
        self.t += 1
        truncated = (not terminated) and self.t >= self.spec.max_steps
        self.done = terminated or truncated
        return Transition(obs, float(reward), bool(terminated), bool(truncated))

    def _reset(self) -> np.ndarray:
        raise NotImplementedError

    def _step(self, action: int):
        raise NotImplementedError


class AugmentedEnv(Env):
    """Appends the running sum of raw rewards (divided by the env's scale) to observations.

    The running return always tracks raw environment reward; trainers that cap
    rewards do so on the recorded trajectory, never through this wrapper.
    """

    def __init__(self, env: Env):
        self.env = env
        base = env.spec
        self.spec = EnvSpec(base.name, base.observation_dim + 1, base.action_count, base.max_steps, base.return_scale)
        self.running_return = 0.0
        self._last_base = None

    @property
    def rng(self):
        return self.env.rng

    @property
    def t(self):
        return self.env.t

    @property
    def done(self):
        return self.env.done

    def reset(self, seed=None) -> np.ndarray:
        self.running_return = 0.0
        self._last_base = self.env.reset(seed)
        return self._augment(self._last_base)

    def step(self, action: int, **forced) -> Transition:
        # ``forced`` passes outcome overrides (win=, category=, guard_draw=) to the base env
        tr = self.env.step(action, **forced)
        self.running_return += tr.reward
        self._last_base = tr.next_observation
        return Transition(self._augment(tr.next_observation), tr.reward, tr.terminated, tr.truncated)

    def observation(self) -> AugmentedObservation:
        return AugmentedObservation(self._last_base, self.running_return, self.spec.return_scale)

    def _augment(self, base_obs: np.ndarray) -> np.ndarray:
        out = np.empty(base_obs.size + 1)
        out[:-1] = base_obs
        out[-1] = self.running_return / self.spec.return_scale
        return out

    def __getattr__(self, name):
        # reached only for attributes not found on the wrapper itself
        return getattr(self.__dict__["env"], name)


def augment(env: Env) -> AugmentedEnv:
    return env if isinstance(env, AugmentedEnv) else AugmentedEnv(env)
