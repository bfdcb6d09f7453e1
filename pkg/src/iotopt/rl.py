"""Tabular Q-learning for cost minimization and a value-iteration oracle."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import RngStream
from .environments.mdp import FiniteMDP
from .trace import RunTrace

EXPLORE_STREAM = 51


@dataclass
class QTable:
    q: np.ndarray
    visits: np.ndarray

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "QTable":
        return cls(np.zeros((n_states, n_actions)), np.zeros((n_states, n_actions), dtype=np.int64))


@dataclass(frozen=True)
class ExploreSchedule:
    """``eps_t = eps0 / (1 + t / tau)`` and stepsize ``1 / visits^power``."""

    eps0: float = 1.0
    tau: float = 1e4
    power: float = 1.0

    def __post_init__(self):
        if not 0 < self.eps0 <= 1 or self.tau <= 0:
            raise ValueError("need eps0 in (0, 1] and tau > 0")
        if not 0.5 < self.power <= 1.0:
            raise ValueError("stepsize power must lie in (0.5, 1]")

    def epsilon(self, t):
        return self.eps0 / (1.0 + np.asarray(t, dtype=float) / self.tau)

    def stepsize(self, visits):
        return 1.0 / np.asarray(visits, dtype=float) ** self.power


def _masked_min(q, mask):
    return np.where(mask, q, np.inf).min(-1)


def _masked_argmin(q, mask):
    # np.argmin returns the first minimizer: ties go to the lowest index.
    return np.where(mask, q, np.inf).argmin(-1)


def act_eps_greedy(table: QTable, s: int, mask, eps: float, rng) -> int:
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("no available action")
    gen = rng.generator if isinstance(rng, RngStream) else rng
    if gen.random() < eps:
        avail = np.flatnonzero(mask)
        return int(avail[gen.integers(len(avail))])
    return int(_masked_argmin(table.q[s], mask))


def q_update(table: QTable, s: int, x: int, cost: float, s_next: int, gamma: float, mask_next,
             power: float = 1.0) -> QTable:
    """Temporal-difference update of the single cell ``(s, x)`` (in place)."""
    table.visits[s, x] += 1
    alpha = 1.0 / table.visits[s, x] ** power
    target = cost + gamma * _masked_min(table.q[s_next], np.asarray(mask_next, dtype=bool))
    table.q[s, x] += alpha * (target - table.q[s, x])
    return table


def bellman_operator(mdp: FiniteMDP, Q: np.ndarray) -> np.ndarray:
    v = _masked_min(Q, mdp.available)  # (S,)
    # P[x, s, s'] @ v -> (x, s); transpose to (s, x).
    return mdp.cost + mdp.discount * (mdp.transition @ v).T


def bellman_residual(mdp: FiniteMDP, Q) -> np.ndarray:
    Q = np.asarray(Q, dtype=float)
    return np.where(mdp.available, np.abs(bellman_operator(mdp, Q) - Q), 0.0)


def value_iteration(mdp: FiniteMDP, tol: float = 1e-10, max_sweeps: int = 100_000,
                    history: list | None = None) -> QTable:
    """Iterate the Bellman optimality operator to sup-norm error at most ``tol``.

    Stops once successive iterates differ by at most ``tol (1 - gamma) / gamma``.
    Pass a list as ``history`` to collect the successive sup-norm changes.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    g = mdp.discount
    thresh = tol * (1 - g) / g
    Q = np.zeros_like(mdp.cost)
    for _ in range(max_sweeps):
        nxt = np.where(mdp.available, bellman_operator(mdp, Q), 0.0)
        change = float(np.abs(nxt - Q).max())
        if history is not None:
            history.append(change)
        Q = nxt
        if change <= thresh:
            break
    return QTable(Q, np.zeros(Q.shape, dtype=np.int64))


def greedy_policy(Q, mask) -> np.ndarray:
    return _masked_argmin(np.asarray(Q), np.asarray(mask, dtype=bool))


def run_q_learning_batch(mdps: list[FiniteMDP], T: int, schedule: ExploreSchedule, seeds,
                         s0: int = 0, record: bool = True):
    """Q-learning on several MDPs in lockstep; returns ``[(QTable, RunTrace | None), ...]``.

    Every MDP must share the state and action counts. Each seed consumes three
    uniforms per step (explore flag, explore action, transition), so a seed's
    run is independent of the batch it is in.
    """
    if T < 1:
        raise ValueError("horizon must be >= 1")
    seeds = list(seeds)
    B = len(mdps)
    nS, nA = mdps[0].n_states, mdps[0].n_actions
    gam = np.array([m.discount for m in mdps])
    cost = np.stack([m.cost for m in mdps])
    mask = np.stack([m.available for m in mdps])
    # cdf[b, s, x, s'] for inverse-transform sampling of the next state.
    cdf = np.cumsum(np.stack([m.transition.transpose(1, 0, 2) for m in mdps]), axis=-1)
    U = np.stack([RngStream(s, EXPLORE_STREAM).random((T, 3)) for s in seeds])
    Q = np.zeros((B, nS, nA))
    visits = np.zeros((B, nS, nA), dtype=np.int64)
    rows = np.arange(B)
    n_avail = mask.sum(-1)
    order = np.argsort(~mask, axis=-1, kind="stable")  # available actions first, by index
    s = np.full(B, s0, dtype=np.int64)
    S_log = np.zeros((B, T), dtype=np.int64)
    X_log = np.zeros((B, T), dtype=np.int64)
    C_log = np.zeros((B, T))
    eps = schedule.epsilon(np.arange(T))
    for t in range(T):
        u = U[:, t]
        m = mask[rows, s]
        greedy = _masked_argmin(Q[rows, s], m)
        pick = np.minimum((u[:, 1] * n_avail[rows, s]).astype(np.int64), n_avail[rows, s] - 1)
        rand = order[rows, s, pick]
        x = np.where(u[:, 0] < eps[t], rand, greedy)
        c = cost[rows, s, x]
        row_cdf = cdf[rows, s, x]
        s_next = np.minimum((row_cdf < u[:, 2, None] * row_cdf[:, -1:]).sum(-1), nS - 1)
        visits[rows, s, x] += 1
        alpha = schedule.stepsize(visits[rows, s, x])
        target = c + gam * _masked_min(Q[rows, s_next], mask[rows, s_next])
        Q[rows, s, x] += alpha * (target - Q[rows, s, x])
        S_log[:, t], X_log[:, t], C_log[:, t] = s, x, c
        s = s_next
    out = []
    for i, sd in enumerate(seeds):
        tr = None
        if record:
            tr = RunTrace("q-learning", "mdp", sd, X_log[i][:, None].astype(float), C_log[i],
                          np.zeros((T, 0)), np.zeros((T, 0)),
                          extras={"state": S_log[i], "action": X_log[i]})
        out.append((QTable(Q[i], visits[i]), tr))
    return out


def run_q_learning(mdp: FiniteMDP, T: int, schedule: ExploreSchedule, seed: int, s0: int = 0,
                   record: bool = True):
    return run_q_learning_batch([mdp], T, schedule, [seed], s0, record)[0]
