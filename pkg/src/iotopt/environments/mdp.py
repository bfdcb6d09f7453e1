"""Finite MDPs for the fully interactive setting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import RngStream


@dataclass
class FiniteMDP:
    transition: np.ndarray  # P[x, s, s']
    cost: np.ndarray  # f(x; s) stored as cost[s, x]
    discount: float
    available: np.ndarray  # mask[s, x]

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        if P.ndim != 3 or P.shape[1] != P.shape[2]:
            raise ValueError("transition must have shape (n_actions, n_states, n_states)")
        if np.any(P < 0) or np.max(np.abs(P.sum(-1) - 1.0)) > 1e-12:
            raise ValueError("transition rows must be stochastic")
        A, S, _ = P.shape
        cost = np.asarray(self.cost, dtype=float)
        mask = np.asarray(self.available, dtype=bool)
        if cost.shape != (S, A) or mask.shape != (S, A):
            raise ValueError("cost and availability must have shape (n_states, n_actions)")
        if not np.all(np.isfinite(cost)):
            raise ValueError("costs must be finite")
        if not np.all(mask.any(1)):
            raise ValueError("every state needs at least one available action")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        self.transition, self.cost, self.available = P, cost, mask

    @property
    def n_states(self) -> int:
        return self.transition.shape[1]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[0]


def random_mdp(n_states: int, n_actions: int, discount: float, rng, mask=None) -> FiniteMDP:
    """Random MDP with normalized positive transition rows and U[0,1] costs."""
    if n_states < 1 or n_actions < 1:
        raise ValueError("sizes must be >= 1")
    if not 0.0 < discount < 1.0:
        raise ValueError("discount must lie in (0, 1)")
    gen = rng.generator if isinstance(rng, RngStream) else rng
    raw = gen.random((n_actions, n_states, n_states)) + 1e-3
    P = raw / raw.sum(-1, keepdims=True)
    cost = gen.random((n_states, n_actions))
    if mask is None:
        mask = np.ones((n_states, n_actions), dtype=bool)
    return FiniteMDP(P, cost, discount, mask)
