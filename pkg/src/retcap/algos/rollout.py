"""Lockstep trajectory sampling over a pool of environment instances."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..envs import Env, make_env
from ..nn import sample_action


@dataclass
class Trajectory:
    observations: np.ndarray  # (T, obs_dim), the observation each action was taken from
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray  # raw environment rewards
    final_observation: np.ndarray
    terminated: bool
    truncated: bool
    episode_id: int = -1

    def __len__(self) -> int:
        return self.rewards.size

    @property
    def total_return(self) -> float:
        return float(self.rewards.sum())

    def discounted_return(self, gamma: float) -> float:
        return float(np.dot(gamma ** np.arange(self.rewards.size), self.rewards))


# policy(observations[n, d]) -> (probs[n, A], log_probs[n, A])
PolicyFn = Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]]


class Sampler:
    """Runs ``num_envs`` episodes side by side so the policy is evaluated in batches.

    Episode ``i`` of this sampler is reset with seed ``(seed, stream, i)``, so the
    environment randomness of every episode is fixed by the seed and the
    episode counter regardless of policy.
    """

    def __init__(self, env_name: str, num_envs: int = 16, seed: int = 0, stream: int = 0,
                 env_factory: Callable[[], Env] | None = None):
        factory = env_factory or (lambda: make_env(env_name))
        self.envs = [factory() for _ in range(num_envs)]
        self.spec = self.envs[0].spec
        self.seed = seed
        self.stream = stream
        self.episode_counter = 0

    def _next_seed(self) -> tuple[int, list[int]]:
        eid = self.episode_counter
        self.episode_counter += 1
        return eid, [self.seed, self.stream, eid]

    def sample(self, policy: PolicyFn, rng: np.random.Generator, min_steps: int | None = None,
               episodes: int | None = None) -> list[Trajectory]:
        """Collect complete episodes.

        With ``min_steps`` new episodes keep starting until that many steps have been
        taken, and every started episode is run to completion. With ``episodes``
        exactly that many are run. Trajectories come back ordered by episode id.
        """
        if (min_steps is None) == (episodes is None):
            raise ValueError("pass exactly one of min_steps / episodes")
        steps_taken = 0
        launched = 0

        def want_more() -> bool:
            return steps_taken < min_steps if min_steps is not None else launched < episodes

        slots = []  # [env, episode_id, obs, obs_list, act_list, logp_list, rew_list]
        for env in self.envs:
            if not want_more():
                break
            eid, s = self._next_seed()
            slots.append([env, eid, env.reset(s), [], [], [], []])
            launched += 1

        done: list[Trajectory] = []
        while slots:
            obs = np.stack([s[2] for s in slots])
            probs, log_probs = policy(obs)
            actions = sample_action(probs, rng)
            logp = log_probs[np.arange(len(slots)), actions]
            still = []
            for i, slot in enumerate(slots):
                env = slot[0]
                a = int(actions[i])
                tr = env.step(a)
                slot[3].append(slot[2])
                slot[4].append(a)
                slot[5].append(logp[i])
                slot[6].append(tr.reward)
                slot[2] = tr.next_observation
                steps_taken += 1
                if tr.terminated or tr.truncated:
                    done.append(Trajectory(
                        np.array(slot[3]), np.array(slot[4], dtype=np.int64), np.array(slot[5]),
                        np.array(slot[6]), tr.next_observation, tr.terminated, tr.truncated, slot[1],
                    ))
                    if want_more():
                        eid, s = self._next_seed()
                        still.append([env, eid, env.reset(s), [], [], [], []])
                        launched += 1
                else:
                    still.append(slot)
            slots = still
        done.sort(key=lambda t: t.episode_id)
        return done
