"""Exact check that maximizing the capped expectation at C = VaR(optimal) recovers the CVaR optimum."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from ..risk import ExactDistribution, check_alpha, exact_var_cvar
from .tiny import AugState, TinyMdp, enumerate_policies, exact_return_distribution

TOL = 1e-9


def capped_expectation(dist: ExactDistribution, cap: float) -> float:
    """E[min(R, C)]."""
    return math.fsum(p * min(v, cap) for v, p in dist.atoms)


def format_policy(policy: dict[AugState, str]) -> str:
    return ", ".join(f"({s.state}, t={s.t}, R={s.ret:g})->{a}" for s, a in policy.items())


@dataclass
class PolicyScore:
    index: int
    policy: dict
    mean: float
    var: float
    cvar: float
    capped: float = math.nan


@dataclass
class Prop1Report:
    mdp: str
    alpha: float
    passed: bool
    n_policies: int
    optimal_cvar: float
    cap: float
    optimal_policy: dict
    var_star: float
    argmax: list[PolicyScore] = field(default_factory=list)
    offending: PolicyScore | None = None
    cap_offset: float = 0.0
    risk_neutral_differs: bool = False

    def lines(self) -> list[str]:
        status = "PASS" if self.passed else "FAIL"
        out = [
            f"{status} {self.mdp}: alpha={self.alpha:g}, {self.n_policies} deterministic policies",
            f"  optimal CVaR {self.optimal_cvar:.12g}, VaR(pi*) {self.var_star:.12g}, cap used {self.cap:.12g}",
            f"  pi*: {format_policy(self.optimal_policy)}",
            f"  capped-expectation argmax: {len(self.argmax)} polic{'y' if len(self.argmax) == 1 else 'ies'}",
        ]
        if self.risk_neutral_differs:
            out.append("  note: the risk-neutral optimum is not CVaR-optimal here")
        if self.offending is not None:
            out.append(f"  offending policy #{self.offending.index}: CVaR {self.offending.cvar:.12g}, "
                       f"{format_policy(self.offending.policy)}")
        return out


def score_policies(mdp: TinyMdp, alpha: float) -> list[PolicyScore]:
    scores = []
    for i, pol in enumerate(enumerate_policies(mdp)):
        dist = exact_return_distribution(mdp, pol)
        var, cvar = exact_var_cvar(dist, alpha)
        scores.append(PolicyScore(i, pol, dist.mean(), var, cvar))
    return scores


def verify_proposition1(mdp: TinyMdp, alpha: float | None = None, cap_offset: float = 0.0) -> Prop1Report:
    """Enumerate deterministic policies; every maximizer of E[min(R, C)] with
    C = VaR_alpha(pi*) (+ ``cap_offset``) must attain the optimal CVaR_alpha.

    A nonzero ``cap_offset`` is for demonstrating cap sensitivity; the optimality claim
    only speaks about offset 0.
    """
    alpha = check_alpha(mdp.alpha if alpha is None else alpha)
    scores = score_policies(mdp, alpha)
    best_cvar = max(s.cvar for s in scores)
    star = next(s for s in scores if s.cvar >= best_cvar - TOL)
    cap = star.var + cap_offset
    for s in scores:
        s.capped = capped_expectation(exact_return_distribution(mdp, s.policy), cap)
    best_capped = max(s.capped for s in scores)
    argmax = [s for s in scores if s.capped >= best_capped - TOL]
    bad = [s for s in argmax if s.cvar < best_cvar - TOL]
    best_mean = max(s.mean for s in scores)
    neutral = [s for s in scores if s.mean >= best_mean - TOL]
    return Prop1Report(
        mdp=mdp.name,
        alpha=alpha,
        passed=not bad,
        n_policies=len(scores),
        optimal_cvar=best_cvar,
        cap=cap,
        optimal_policy=star.policy,
        var_star=star.var,
        argmax=argmax,
        offending=bad[0] if bad else None,
        cap_offset=cap_offset,
        risk_neutral_differs=any(s.cvar < best_cvar - TOL for s in neutral),
    )
