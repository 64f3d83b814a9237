from __future__ import annotations

import numpy as np

from .base import Env, EnvSpec, Transition

START_TOKENS = 16.0
N_BETS = 6
WIN_PROB = 0.8
BET_FRACTIONS = np.arange(9) / 8.0  # 0%, 12.5%, ..., 100%


class BettingGame(Env):
    """Sequential betting: wager a fraction of the current tokens, win it with p=0.8 or lose it.

    Observation is ``(tokens / 16, turn / 6)``. Reward is the token change of the
    turn, so the episode return equals final tokens minus 16. Ends after six
    bets or when the tokens run out.
    """

    spec = EnvSpec("betting", 2, len(BET_FRACTIONS), N_BETS, START_TOKENS)

    def __init__(self, win_prob: float = WIN_PROB, start_tokens: float = START_TOKENS):
        super().__init__()
        self.win_prob = win_prob
        self.start_tokens = start_tokens
        self.tokens = start_tokens
        self.turn = 0
        self._draws = None
        self._forced = None

    def _obs(self) -> np.ndarray:
        return np.array([self.tokens / START_TOKENS, self.turn / N_BETS])

    def _reset(self) -> np.ndarray:
        self.tokens = self.start_tokens
        self.turn = 0
        self._draws = self.rng.random(N_BETS)
        return self._obs()

    def step(self, action: int, win: bool | None = None) -> Transition:
        """``win`` overrides the seeded coin for this bet (used by tests and oracles)."""
        self._forced = win
        try:
            return super().step(action)
        finally:
            self._forced = None

    def _step(self, action: int):
        wager = BET_FRACTIONS[action] * self.tokens
        if self._forced is None:
            win = bool(self._draws[self.turn] < self.win_prob)
        else:
            win = self._forced
        reward = wager if win else -wager
        self.tokens += reward
        self.turn += 1
        terminated = self.turn >= N_BETS or self.tokens <= 0.0
        return self._obs(), reward, terminated
