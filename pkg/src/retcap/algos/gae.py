from __future__ import annotations

import numpy as np


def gae_advantages(rewards, values, bootstrap_value: float, gamma: float, lam: float):
    """Generalized advantage estimates and value targets for one trajectory.

    ``bootstrap_value`` is V(final observation) for a truncated episode and 0 for
    a terminated one. Returns ``(advantages, advantages + values)``.
    """
    r = np.asarray(rewards, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    if r.shape != v.shape:
        raise ValueError(f"{r.size} rewards but {v.size} values")
    adv = np.empty_like(r)
    next_value = float(bootstrap_value)
    running = 0.0
    for t in range(r.size - 1, -1, -1):
        delta = r[t] + gamma * next_value - v[t]
        running = delta + gamma * lam * running
        adv[t] = running
        next_value = v[t]
    return adv, adv + v
