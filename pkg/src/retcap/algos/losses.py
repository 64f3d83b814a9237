"""Scalar losses (to be minimized) and their gradients with respect to network outputs."""

from __future__ import annotations

import numpy as np

from ..nn import categorical_head


def clipped_surrogate(ratio, advantages, clip_epsilon: float) -> np.ndarray:
    """Per-sample min(r * A, clip(r, 1 - eps, 1 + eps) * A)."""
    ratio = np.asarray(ratio, dtype=np.float64)
    adv = np.asarray(advantages, dtype=np.float64)
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * adv)


def ppo_policy_loss(logits, actions, old_log_probs, advantages, clip_epsilon: float,
                    entropy_coeff: float) -> tuple[float, np.ndarray, dict]:
    """Negative clipped surrogate minus the entropy bonus, averaged over the sub-batch."""
    probs, log_probs = categorical_head(logits)
    n = probs.shape[0]
    idx = np.arange(n)
    logp = log_probs[idx, actions]
    ratio = np.exp(logp - old_log_probs)
    unclipped = ratio * advantages
    surr = clipped_surrogate(ratio, advantages, clip_epsilon)
    entropy = -(probs * log_probs).sum(axis=-1)
    loss = -surr.mean() - entropy_coeff * entropy.mean()

    # d surr / d logp is r*A where the unclipped branch is the minimum, else 0
    active = unclipped <= surr
    d_logp = np.where(active, -unclipped, 0.0) / n
    d_logits = -probs * d_logp[:, None]
    d_logits[idx, actions] += d_logp
    # dH/dz_k = -p_k (log p_k + H)
    d_ent = -probs * (log_probs + entropy[:, None])
    d_logits -= entropy_coeff * d_ent / n
    info = {
        "surrogate": float(surr.mean()),
        "entropy": float(entropy.mean()),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > clip_epsilon)),
    }
    return float(loss), d_logits, info


def value_loss(predictions, targets) -> tuple[float, np.ndarray]:
    """Mean squared error; ``predictions`` has shape (n, 1)."""
    pred = np.asarray(predictions, dtype=np.float64).reshape(-1)
    err = pred - np.asarray(targets, dtype=np.float64)
    n = err.size
    return float(np.mean(err * err)), (2.0 * err / n).reshape(-1, 1)


def cvar_pg_loss(logits, actions, step_weights) -> tuple[float, np.ndarray]:
    """Negative weighted log-likelihood ``-sum_s w_s log pi(a_s | s_s)``.

    For the CVaR policy gradient ``w_s = 1[tail] (R - VaR) / (alpha N)`` of the
    trajectory that step ``s`` belongs to.
    """
    probs, log_probs = categorical_head(logits)
    idx = np.arange(probs.shape[0])
    w = np.asarray(step_weights, dtype=np.float64)
    loss = -float(np.dot(w, log_probs[idx, actions]))
    d_logits = probs * w[:, None]
    d_logits[idx, actions] -= w
    return loss, d_logits
