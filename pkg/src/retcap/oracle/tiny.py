"""Miniature finite-horizon MDPs, their augmented state spaces, and exact return distributions.

File format (one directive or transition per line, ``#`` starts a comment)::

    initial <state>
    horizon <int, 1..4>
    alpha <real>                    # optional default risk level
    <state> <action> <prob> <next> <reward>

Probabilities may be written as fractions (``1/3``). A state with no outgoing
transitions is terminal; episodes also stop after ``horizon`` decisions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Iterator, NamedTuple

import numpy as np

from ..risk import ExactDistribution

MAX_POLICIES = 10**6
MAX_HORIZON = 4
_PROB_TOL = 1e-12
# running returns are rounded to this many decimals when used as part of a state key
_RETURN_DIGITS = 9


class OracleError(ValueError):
    """Malformed TinyMdp or an enumeration that would be too large."""


class AugState(NamedTuple):
    state: str
    t: int
    ret: float  # running return so far


@dataclass
class TinyMdp:
    initial: str
    horizon: int
    transitions: dict[tuple[str, str], list[tuple[float, str, float]]]
    name: str = "tiny"
    alpha: float | None = None
    actions_by_state: dict[str, list[str]] = field(init=False)

    def __post_init__(self):
        if not 1 <= self.horizon <= MAX_HORIZON:
            raise OracleError(f"horizon must lie in 1..{MAX_HORIZON}, got {self.horizon}")
        by_state: dict[str, list[str]] = {}
        for (s, a), outs in self.transitions.items():
            total = math.fsum(p for p, _, _ in outs)
            if abs(total - 1.0) > _PROB_TOL:
                raise OracleError(f"transition probabilities of ({s}, {a}) sum to {total!r}")
            if any(p < 0 for p, _, _ in outs):
                raise OracleError(f"negative probability in ({s}, {a})")
            by_state.setdefault(s, []).append(a)
        self.actions_by_state = {s: sorted(acts) for s, acts in by_state.items()}
        if self.initial not in self.actions_by_state:
            raise OracleError(f"initial state {self.initial!r} has no transitions")

    def actions(self, state: str) -> list[str]:
        return self.actions_by_state.get(state, [])

    def is_terminal(self, aug: AugState) -> bool:
        return aug.t >= self.horizon or not self.actions(aug.state)

    def successors(self, aug: AugState, action: str) -> list[tuple[float, AugState, float]]:
        return [
            (p, AugState(nxt, aug.t + 1, round(aug.ret + r, _RETURN_DIGITS)), r)
            for p, nxt, r in self.transitions[(aug.state, action)]
            if p > 0.0
        ]

    @property
    def start(self) -> AugState:
        return AugState(self.initial, 0, 0.0)

    def decision_states(self) -> list[AugState]:
        """Augmented states reachable under some policy at which an action must be chosen."""
        seen = {self.start}
        stack = [self.start]
        while stack:
            aug = stack.pop()
            if self.is_terminal(aug):
                continue
            for a in self.actions(aug.state):
                for _, nxt, _ in self.successors(aug, a):
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
        return sorted((s for s in seen if not self.is_terminal(s)), key=lambda s: (s.t, s.ret, s.state))

    def policy_count(self) -> int:
        return math.prod(len(self.actions(s.state)) for s in self.decision_states())


def parse_tiny_mdp(text: str, name: str = "tiny") -> TinyMdp:
    initial = None
    horizon = None
    alpha = None
    transitions: dict[tuple[str, str], list[tuple[float, str, float]]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] in ("initial", "horizon", "alpha"):
                if len(parts) != 2:
                    raise ValueError(f"'{parts[0]}' takes exactly one value")
                if parts[0] == "initial":
                    initial = parts[1]
                elif parts[0] == "horizon":
                    horizon = int(parts[1])
                else:
                    alpha = float(parts[1])
                continue
            if len(parts) != 5:
                raise ValueError("expected '<state> <action> <prob> <next> <reward>'")
            s, a, p, nxt, r = parts
            prob = float(Fraction(p))
            transitions.setdefault((s, a), []).append((prob, nxt, float(r)))
        except (ValueError, ZeroDivisionError) as exc:
            raise OracleError(f"{name}:{lineno}: {exc}") from None
    if initial is None or horizon is None:
        raise OracleError(f"{name}: 'initial' and 'horizon' lines are required")
    return TinyMdp(initial, horizon, transitions, name=name, alpha=alpha)


def load_tiny_mdp(path) -> TinyMdp:
    with open(path) as fh:
        text = fh.read()
    return parse_tiny_mdp(text, name=str(path))


SUITE = ("single_action", "mini_betting", "guarded_corridor", "betting_three_rounds", "hedge", "twin_actions")


def builtin_mdp(name: str) -> TinyMdp:
    text = resources.files("retcap.oracle").joinpath(f"data/{name}.mdp").read_text()
    return parse_tiny_mdp(text, name=name)


def builtin_suite() -> list[TinyMdp]:
    return [builtin_mdp(n) for n in SUITE]


def enumerate_policies(mdp: TinyMdp) -> Iterator[dict[AugState, str]]:
    """Every deterministic map from decision states to actions, each exactly once."""
    states = mdp.decision_states()
    count = math.prod(len(mdp.actions(s.state)) for s in states)
    if count > MAX_POLICIES:
        raise OracleError(f"{mdp.name}: {count} deterministic policies exceeds the limit of {MAX_POLICIES}")
    choices = [mdp.actions(s.state) for s in states]
    for combo in itertools.product(*choices):
        yield dict(zip(states, combo))


def _action_probs(mdp: TinyMdp, policy, aug: AugState) -> list[tuple[str, float]]:
    choice = policy[aug]
    if isinstance(choice, str):
        return [(choice, 1.0)]
    return [(a, float(p)) for a, p in choice.items() if p > 0.0]


def exact_return_distribution(mdp: TinyMdp, policy) -> ExactDistribution:
    """Forward DP over (augmented state) -> probability.

    ``policy`` maps each decision state either to an action name or to a dict of
    action probabilities.
    """
    frontier = {mdp.start: 1.0}
    finished: dict[float, float] = {}
    while frontier:
        nxt_frontier: dict[AugState, float] = {}
        for aug, prob in frontier.items():
            if mdp.is_terminal(aug):
                finished[aug.ret] = finished.get(aug.ret, 0.0) + prob
                continue
            for a, pa in _action_probs(mdp, policy, aug):
                for p, nxt, _ in mdp.successors(aug, a):
                    nxt_frontier[nxt] = nxt_frontier.get(nxt, 0.0) + prob * pa * p
        frontier = nxt_frontier
    return ExactDistribution(sorted(finished.items()))


def sample_returns(mdp: TinyMdp, policy, n: int, rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo episode returns, for cross-checking the exact distribution."""
    out = np.empty(n)
    for i in range(n):
        aug = mdp.start
        while not mdp.is_terminal(aug):
            acts = _action_probs(mdp, policy, aug)
            a = acts[rng.choice(len(acts), p=[p for _, p in acts])][0] if len(acts) > 1 else acts[0][0]
            succ = mdp.successors(aug, a)
            j = rng.choice(len(succ), p=[p for p, _, _ in succ]) if len(succ) > 1 else 0
            aug = succ[j][1]
        out[i] = aug.ret
    return out


def random_stochastic_policy(mdp: TinyMdp, rng: np.random.Generator) -> dict[AugState, dict[str, float]]:
    policy = {}
    for s in mdp.decision_states():
        acts = mdp.actions(s.state)
        w = rng.dirichlet(np.ones(len(acts)))
        policy[s] = dict(zip(acts, w))
    return policy
