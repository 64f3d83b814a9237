"""Tail statistics of return samples and the capped-return reward adjustment.

Two families live here. The empirical estimators (``empirical_var``,
``empirical_cvar``, ``tail_mask``) work on a finite batch of episode returns
and always use whole samples. ``exact_var_cvar`` works on a discrete
distribution and weights the boundary atom fractionally, so the tail mass is
exactly ``alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# Slack for alpha * n landing a hair above an integer (0.1 * 30 == 3.0000000000000004).
_COUNT_SLACK = 1e-9
_ATOM_MERGE_TOL = 1e-12
_PROB_SUM_TOL = 1e-12


class InvalidInput(ValueError):
    """Raised when a statistic is requested on an invalid batch or level."""


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha <= 1.0) or math.isnan(alpha):
        raise InvalidInput(f"alpha must lie in (0, 1], got {alpha!r}")
    return alpha


def tail_count(alpha: float, n: int) -> int:
    """Number of samples in the bottom-``alpha`` tail of ``n`` samples, i.e. ceil(alpha * n)."""
    alpha = check_alpha(alpha)
    if n < 1:
        raise InvalidInput("batch must contain at least one return")
    return min(n, max(1, math.ceil(alpha * n - _COUNT_SLACK)))


@dataclass(frozen=True)
class ReturnBatch:
    """Episode returns of one batch together with the risk level."""

    returns: np.ndarray
    alpha: float

    def __init__(self, returns: Iterable[float], alpha: float):
        arr = np.asarray(list(returns) if not isinstance(returns, np.ndarray) else returns, dtype=np.float64)
        if arr.ndim != 1 or arr.size == 0:
            raise InvalidInput("batch must be a non-empty 1-d sequence of returns")
        if not np.all(np.isfinite(arr)):
            raise InvalidInput("returns must be finite")
        object.__setattr__(self, "returns", arr)
        object.__setattr__(self, "alpha", check_alpha(alpha))

    def __len__(self) -> int:
        return self.returns.size

    @property
    def k(self) -> int:
        return tail_count(self.alpha, self.returns.size)

    def tail_indices(self) -> np.ndarray:
        # stable sort: equal returns keep their original order, so lower index wins
        order = np.argsort(self.returns, kind="stable")
        return order[: self.k]


def _as_batch(batch_or_returns, alpha: float | None) -> ReturnBatch:
    if isinstance(batch_or_returns, ReturnBatch):
        if alpha is not None and alpha != batch_or_returns.alpha:
            return ReturnBatch(batch_or_returns.returns, alpha)
        return batch_or_returns
    if alpha is None:
        raise InvalidInput("alpha is required when passing raw returns")
    return ReturnBatch(batch_or_returns, alpha)


def empirical_var(batch: ReturnBatch | Sequence[float], alpha: float | None = None) -> float:
    """Value at the ascending-sorted index ceil(alpha * N) - 1."""
    b = _as_batch(batch, alpha)
    return float(np.sort(b.returns, kind="stable")[b.k - 1])


def empirical_cvar(batch: ReturnBatch | Sequence[float], alpha: float | None = None) -> float:
    """Mean of the ceil(alpha * N) smallest returns."""
    b = _as_batch(batch, alpha)
    return float(np.mean(b.returns[b.tail_indices()]))


def tail_mask(batch: ReturnBatch | Sequence[float], alpha: float | None = None) -> np.ndarray:
    """Boolean mask selecting the ceil(alpha * N) lowest returns."""
    b = _as_batch(batch, alpha)
    mask = np.zeros(len(b), dtype=bool)
    mask[b.tail_indices()] = True
    return mask


def tail_stats(returns: Sequence[float], alpha: float) -> tuple[float, float]:
    """(VaR, CVaR) of a batch with a single sort."""
    b = ReturnBatch(returns, alpha)
    s = np.sort(b.returns, kind="stable")
    return float(s[b.k - 1]), float(np.mean(s[: b.k]))


def cap_rewards(rewards: Sequence[float], cap: float) -> np.ndarray:
    """Redistribute per-step rewards so every running sum is min(running sum, cap).

    ``out[t] = min(R_t, cap) - min(R_{t-1}, cap)`` for t >= 1 and
    ``out[0] = min(R_0, cap)``, so ``sum(out[:t+1]) == min(R_t, cap)`` for any
    sign of ``cap``. Steps where neither running sum exceeds the cap pass the raw
    reward through unchanged, so a cap that never binds is an exact no-op.
    """
    r = np.asarray(rewards, dtype=np.float64)
    cap = float(cap)
    if not (np.all(np.isfinite(r)) and math.isfinite(cap)):
        raise InvalidInput("rewards and cap must be finite")
    if r.size == 0:
        return r.copy()
    running = np.cumsum(r)
    capped = np.minimum(running, cap)
    out = np.empty_like(r)
    out[0] = capped[0]
    out[1:] = np.diff(capped)
    above = running > cap
    free = ~above
    free[1:] &= ~above[:-1]
    out[free] = r[free]
    return out


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    if not (0.0 < gamma <= 1.0):
        raise InvalidInput(f"gamma must lie in (0, 1], got {gamma!r}")
    r = np.asarray(rewards, dtype=np.float64)
    return float(np.dot(gamma ** np.arange(r.size), r))


@dataclass
class ExactDistribution:
    """Finite return distribution as ascending (value, probability) atoms.

    Atoms closer than 1e-12 are merged on construction.
    """

    atoms: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        if not self.atoms:
            raise InvalidInput("distribution needs at least one atom")
        pairs = sorted((float(v), float(p)) for v, p in self.atoms)
        if any(p < 0.0 or not math.isfinite(p) or not math.isfinite(v) for v, p in pairs):
            raise InvalidInput("probabilities must be finite and nonnegative")
        total = math.fsum(p for _, p in pairs)
        if abs(total - 1.0) > _PROB_SUM_TOL:
            raise InvalidInput(f"probabilities sum to {total!r}, not 1")
        merged: list[list[float]] = []
        for v, p in pairs:
            if merged and abs(v - merged[-1][0]) <= _ATOM_MERGE_TOL:
                merged[-1][1] += p
            else:
                merged.append([v, p])
        self.atoms = [(v, p) for v, p in merged if p > 0.0] or [(merged[0][0], merged[0][1])]

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "ExactDistribution":
        samples = list(samples)
        w = 1.0 / len(samples)
        return cls([(s, w) for s in samples])

    @property
    def values(self) -> np.ndarray:
        return np.array([v for v, _ in self.atoms])

    @property
    def probs(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms])

    def mean(self) -> float:
        return math.fsum(v * p for v, p in self.atoms)

    def cdf(self, z: float) -> float:
        return math.fsum(p for v, p in self.atoms if v <= z)


def exact_var_cvar(dist: ExactDistribution, alpha: float) -> tuple[float, float]:
    """VaR as min{z : F(z) >= alpha}; CVaR as (1/alpha) * integral of VaR_x over (0, alpha]."""
    alpha = check_alpha(alpha)
    cum = 0.0
    var = dist.atoms[-1][0]
    for v, p in dist.atoms:
        cum += p
        if cum >= alpha - _PROB_SUM_TOL:
            var = v
            break
    taken = 0.0
    acc = 0.0
    for v, p in dist.atoms:
        w = min(p, alpha - taken)
        if w <= 0.0:
            break
        acc += w * v
        taken += w
    # rounding can leave taken a few ulps short of alpha; the remainder sits at VaR
    if taken < alpha:
        acc += (alpha - taken) * var
    return var, acc / alpha
