"""Risk-neutral PPO, CVaR-PG, CVaR-PPO and Return Capping on a shared rollout/update core."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..envs import make_env
from ..nn import Adam, Mlp, MlpSpec, categorical_head
from ..risk import cap_rewards, check_alpha, tail_mask, tail_stats
from .gae import gae_advantages
from .losses import cvar_pg_loss, ppo_policy_loss, value_loss
from .rollout import Sampler, Trajectory

ALGORITHMS = ("ppo", "cvar_pg", "cvar_ppo", "return_capping")
FAIRNESS_MODES = ("equal_env_steps", "equal_updates")
# last-layer init scale of the policy net, so every trainer starts near uniform
POLICY_HEAD_SCALE = 0.01


@dataclass
class AlgoConfig:
    alpha: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    entropy_coeff: float = 1e-5
    learning_rate: float = 1e-3
    batch_env_steps: int = 5000
    epochs_per_batch: int = 5
    sub_batch_size: int = 50
    updates: int = 200
    fairness_mode: str = "equal_env_steps"
    cap_eta: float = 0.2
    min_cap: float = 0.0
    hidden: tuple[int, ...] = (64, 64)
    num_envs: int = 16

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self) -> None:
        check_alpha(self.alpha)
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError(f"gae_lambda must lie in [0, 1], got {self.gae_lambda}")
        if not 0.0 <= self.cap_eta <= 1.0:
            raise ValueError(f"cap_eta must lie in [0, 1], got {self.cap_eta}")
        if self.clip_epsilon < 0 or self.entropy_coeff < 0 or self.learning_rate <= 0:
            raise ValueError("clip_epsilon and entropy_coeff must be >= 0, learning_rate > 0")
        for name in ("batch_env_steps", "epochs_per_batch", "sub_batch_size", "num_envs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.updates < 0:
            raise ValueError("updates must be >= 0")
        if self.fairness_mode not in FAIRNESS_MODES:
            raise ValueError(f"fairness_mode must be one of {FAIRNESS_MODES}")
        if not math.isfinite(self.min_cap):
            raise ValueError("min_cap must be finite")


@dataclass
class CapState:
    cap: float
    min_cap: float
    eta: float

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"cap step size must lie in [0, 1], got {self.eta}")


def update_cap(state: CapState, batch_var: float) -> CapState:
    """Move the cap a step of size eta toward the batch VaR, never below the minimum cap."""
    cap = state.cap + state.eta * (batch_var - state.cap)
    return replace(state, cap=max(cap, state.min_cap))


def steps_per_update(algorithm: str, config: AlgoConfig) -> int:
    if config.fairness_mode == "equal_updates" and algorithm in ("cvar_pg", "cvar_ppo"):
        return math.ceil(config.batch_env_steps / config.alpha - 1e-9)
    return config.batch_env_steps


@dataclass
class TrainBatch:
    """Flattened steps of the trajectories selected for an update."""

    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    values: np.ndarray
    advantages: np.ndarray
    value_targets: np.ndarray
    episode_index: np.ndarray  # position of each step's trajectory in the sampled list
    returns: np.ndarray = field(default_factory=lambda: np.zeros(0))
    # False when every trajectory repeats the same actions and rewards: the true
    # advantages are then all zero and only value-fit residue would remain
    informative: bool = True

    def __len__(self) -> int:
        return self.actions.size


def build_batch(trajectories: list[Trajectory], value_fn: Mlp, gamma: float, lam: float,
                select: np.ndarray | None = None, rewards: list[np.ndarray] | None = None) -> TrainBatch:
    """Run the value net and GAE over the selected trajectories.

    ``rewards`` overrides the recorded per-step rewards (Return Capping passes
    the adjusted ones); ``select`` is a boolean mask over ``trajectories``.
    """
    chosen = [i for i in range(len(trajectories)) if select is None or select[i]]
    obs = np.concatenate([trajectories[i].observations for i in chosen])
    values = value_fn(obs)[:, 0]
    finals = np.stack([trajectories[i].final_observation for i in chosen])
    boot = value_fn(finals)[:, 0]
    adv = np.empty_like(values)
    targets = np.empty_like(values)
    ep_index = np.empty(values.size, dtype=np.int64)
    off = 0
    for j, i in enumerate(chosen):
        tr = trajectories[i]
        n = len(tr)
        r = tr.rewards if rewards is None else rewards[i]
        b = boot[j] if tr.truncated else 0.0
        adv[off:off + n], targets[off:off + n] = gae_advantages(r, values[off:off + n], b, gamma, lam)
        ep_index[off:off + n] = i
        off += n
    used = [trajectories[i].rewards if rewards is None else rewards[i] for i in chosen]
    first = trajectories[chosen[0]]
    identical = all(
        np.array_equal(trajectories[i].actions, first.actions) and np.array_equal(r, used[0])
        for i, r in zip(chosen, used)
    )
    return TrainBatch(
        obs,
        np.concatenate([trajectories[i].actions for i in chosen]),
        np.concatenate([trajectories[i].log_probs for i in chosen]),
        values, adv, targets, ep_index,
        informative=len(chosen) == 1 or not identical,
    )


def ppo_update(policy: Mlp, value_fn: Mlp, opt_pi: Adam, opt_v: Adam, batch: TrainBatch,
               config: AlgoConfig, rng: np.random.Generator) -> dict:
    """Clipped-surrogate PPO epochs over shuffled step sub-batches, plus value regression.

    A batch of identical trajectories only trains the value function: its
    normalized advantages would be amplified value-fit residue, and Adam turns
    even a tiny consistent gradient into full-size steps.
    """
    n = len(batch)
    adv = batch.advantages - batch.advantages.mean()
    adv = adv / (adv.std() + 1e-8)
    pol_losses, val_losses, surrs = [], [], []
    for _ in range(config.epochs_per_batch):
        perm = rng.permutation(n)
        for start in range(0, n, config.sub_batch_size):
            mb = perm[start:start + config.sub_batch_size]
            if batch.informative:
                logits = policy(batch.observations[mb])
                loss, d_logits, info = ppo_policy_loss(
                    logits, batch.actions[mb], batch.log_probs[mb], adv[mb],
                    config.clip_epsilon, config.entropy_coeff,
                )
                policy.backward(d_logits)
                opt_pi.step()
                pol_losses.append(loss)
                surrs.append(info["surrogate"])
            pred = value_fn(batch.observations[mb])
            vloss, d_pred = value_loss(pred, batch.value_targets[mb])
            value_fn.backward(d_pred)
            opt_v.step()
            val_losses.append(vloss)
    return {
        "policy_loss": float(np.mean(pol_losses)) if pol_losses else 0.0,
        "value_loss": float(np.mean(val_losses)) if val_losses else 0.0,
        "surrogate": float(np.mean(surrs)) if surrs else 0.0,
        "steps_used": n if batch.informative else 0,
    }


def cvar_pg_weights(returns: np.ndarray, alpha: float) -> np.ndarray:
    """Per-trajectory weight 1[R <= VaR] (R - VaR) / (alpha N), with the tail chosen by ``tail_mask``."""
    mask = tail_mask(returns, alpha)
    var, _ = tail_stats(returns, alpha)
    return np.where(mask, returns - var, 0.0) / (alpha * returns.size)


def cvar_pg_update(policy: Mlp, opt_pi: Adam, trajectories: list[Trajectory], alpha: float,
                   gamma: float, epochs: int = 1) -> dict:
    """Full-batch ascent on the CVaR policy gradient: whole-episode returns, no baseline."""
    returns = np.array([t.discounted_return(gamma) for t in trajectories])
    w = cvar_pg_weights(returns, alpha)
    used = [i for i in range(len(trajectories)) if w[i] != 0.0]
    grad_norm = 0.0
    if not used:
        return {"grad_norm": 0.0, "steps_used": 0}
    obs = np.concatenate([trajectories[i].observations for i in used])
    actions = np.concatenate([trajectories[i].actions for i in used])
    step_w = np.concatenate([np.full(len(trajectories[i]), w[i]) for i in used])
    for _ in range(epochs):
        logits = policy(obs)
        _, d_logits = cvar_pg_loss(logits, actions, step_w)
        policy.backward(d_logits)
        grad_norm = float(np.linalg.norm(policy.params.grads))
        opt_pi.step()
    return {"grad_norm": grad_norm, "steps_used": int(actions.size)}


class Trainer:
    """One seeded training run of one algorithm on one environment.

    Random streams: network init and action sampling / sub-batch shuffling come
    from spawn keys 1, 2 and 0 of ``SeedSequence(seed)``; training episodes from
    sampler stream 0. Evaluation uses its own streams keyed by the update index,
    so evaluating never perturbs training.
    """

    def __init__(self, algorithm: str, env_name: str, config: AlgoConfig, seed: int):
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
        config.validate()
        self.algorithm = algorithm
        self.env_name = env_name
        self.config = config
        self.seed = int(seed)
        spec = make_env(env_name).spec
        self.policy = Mlp(MlpSpec(spec.observation_dim, config.hidden, spec.action_count), seed=_seq(self.seed, 1),
                          output_scale=POLICY_HEAD_SCALE)
        self.value_fn = Mlp(MlpSpec(spec.observation_dim, config.hidden, 1), seed=_seq(self.seed, 2))
        self.opt_pi = Adam(self.policy.params, config.learning_rate)
        self.opt_v = Adam(self.value_fn.params, config.learning_rate)
        self.rng = np.random.default_rng(_seq(self.seed, 0))
        self.sampler = Sampler(env_name, config.num_envs, self.seed, stream=0)
        self.cap_state = CapState(config.min_cap, config.min_cap, config.cap_eta)
        self.update_index = 0
        self.env_steps = 0

    def act(self, obs: np.ndarray):
        return categorical_head(self.policy(obs))

    def update(self) -> dict:
        cfg = self.config
        trajs = self.sampler.sample(self.act, self.rng, min_steps=steps_per_update(self.algorithm, cfg))
        raw = np.array([t.total_return for t in trajs])
        self.env_steps += sum(len(t) for t in trajs)
        var, cvar = tail_stats(raw, cfg.alpha)
        row = {
            "update_index": self.update_index,
            "cumulative_env_steps": self.env_steps,
            "train_return_mean": float(raw.mean()),
            "train_cvar_alpha": cvar,
            "train_var_alpha": var,
            "cap_value": None,
        }
        if self.algorithm == "ppo":
            batch = build_batch(trajs, self.value_fn, cfg.gamma, cfg.gae_lambda)
            info = ppo_update(self.policy, self.value_fn, self.opt_pi, self.opt_v, batch, cfg, self.rng)
        elif self.algorithm == "cvar_ppo":
            disc = np.array([t.discounted_return(cfg.gamma) for t in trajs])
            mask = tail_mask(disc, cfg.alpha)
            batch = build_batch(trajs, self.value_fn, cfg.gamma, cfg.gae_lambda, select=mask)
            info = ppo_update(self.policy, self.value_fn, self.opt_pi, self.opt_v, batch, cfg, self.rng)
        elif self.algorithm == "cvar_pg":
            info = cvar_pg_update(self.policy, self.opt_pi, trajs, cfg.alpha, cfg.gamma, cfg.epochs_per_batch)
        else:
            info = return_capping_update(self, trajs)
            row["cap_value"] = info["cap_used"]
        self.last_info = info
        self.update_index += 1
        return row

    def state_dict(self) -> dict:
        return {
            "policy": self.policy.params.values.copy(),
            "value": self.value_fn.params.values.copy(),
            "opt_pi": self.opt_pi.state_dict(),
            "opt_v": self.opt_v.state_dict(),
            "rng": self.rng.bit_generator.state,
            "episode_counter": self.sampler.episode_counter,
            "cap_state": asdict(self.cap_state),
            "update_index": self.update_index,
            "env_steps": self.env_steps,
        }

    def load_state_dict(self, state: dict) -> None:
        self.policy.params.values[:] = state["policy"]
        self.value_fn.params.values[:] = state["value"]
        self.opt_pi.load_state_dict(state["opt_pi"])
        self.opt_v.load_state_dict(state["opt_v"])
        self.rng.bit_generator.state = state["rng"]
        self.sampler.episode_counter = int(state["episode_counter"])
        self.cap_state = CapState(**state["cap_state"])
        self.update_index = int(state["update_index"])
        self.env_steps = int(state["env_steps"])


def capped_reward_lists(trajectories: list[Trajectory], cap: float) -> list[np.ndarray]:
    return [cap_rewards(t.rewards, cap) for t in trajectories]


def return_capping_update(trainer: Trainer, trajectories: list[Trajectory]) -> dict:
    """One iteration of Return Capping: cap, PPO on every trajectory, then move the cap.

    The cap update uses the VaR of the uncapped, undiscounted returns.
    """
    cfg = trainer.config
    cap_used = trainer.cap_state.cap
    adjusted = capped_reward_lists(trajectories, cap_used)
    batch = build_batch(trajectories, trainer.value_fn, cfg.gamma, cfg.gae_lambda, rewards=adjusted)
    info = ppo_update(trainer.policy, trainer.value_fn, trainer.opt_pi, trainer.opt_v, batch, cfg, trainer.rng)
    raw = np.array([t.total_return for t in trajectories])
    batch_var, _ = tail_stats(raw, cfg.alpha)
    trainer.cap_state = update_cap(trainer.cap_state, batch_var)
    info.update(cap_used=cap_used, batch_var=batch_var, cap_next=trainer.cap_state.cap)
    return info


def _seq(seed, key: int) -> np.random.SeedSequence:
    entropy = list(seed) if isinstance(seed, (list, tuple)) else int(seed)
    return np.random.SeedSequence(entropy, spawn_key=(key,))


def evaluate_policy(policy_fn, env_name: str, episodes: int, seed: int, stream: int = 1,
                    num_envs: int = 16) -> np.ndarray:
    """Undiscounted returns of ``episodes`` rollouts with actions sampled from the policy.

    Episodes use sampler stream ``stream`` (training owns stream 0).
    """
    sampler = Sampler(env_name, num_envs, seed, stream=stream)
    rng = np.random.default_rng(_seq([seed, stream], 3))
    trajs = sampler.sample(policy_fn, rng, episodes=episodes)
    return np.array([t.total_return for t in trajs])


def train(algorithm: str, env_name: str, config: AlgoConfig, seed: int, eval_every: int = 5,
          eval_episodes: int = 1000, trainer: Trainer | None = None, on_update=None,
          record_wall_time: bool = False) -> list[dict]:
    """Run ``config.updates`` updates and return one metrics row per update.

    Evaluation runs every ``eval_every`` updates and after the last one; rows
    without an evaluation carry ``None`` in the eval columns. ``on_update(trainer, row)``
    is called after each row (the harness checkpoints from there). Pass a
    restored ``trainer`` to resume.
    """
    tr = trainer or Trainer(algorithm, env_name, config, seed)
    rows = []
    t0 = time.perf_counter()
    while tr.update_index < config.updates:
        row = tr.update()
        k = tr.update_index
        if eval_episodes > 0 and ((eval_every > 0 and k % eval_every == 0) or k == config.updates):
            ev = evaluate_policy(tr.act, env_name, eval_episodes, tr.seed, stream=k, num_envs=config.num_envs)
            row["eval_cvar_alpha"] = tail_stats(ev, config.alpha)[1]
            row["eval_return_mean"] = float(ev.mean())
        else:
            row["eval_cvar_alpha"] = row["eval_return_mean"] = None
        row["wall_seconds"] = time.perf_counter() - t0 if record_wall_time else None
        rows.append(row)
        if on_update is not None:
            on_update(tr, row)
    return rows
