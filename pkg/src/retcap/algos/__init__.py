from .gae import gae_advantages
from .losses import clipped_surrogate, cvar_pg_loss, ppo_policy_loss, value_loss
from .rollout import Sampler, Trajectory
from .trainers import (
    ALGORITHMS,
    FAIRNESS_MODES,
    AlgoConfig,
    CapState,
    TrainBatch,
    Trainer,
    build_batch,
    capped_reward_lists,
    cvar_pg_update,
    cvar_pg_weights,
    evaluate_policy,
    ppo_update,
    return_capping_update,
    steps_per_update,
    train,
    update_cap,
)
