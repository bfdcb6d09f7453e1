"""Constrained exponential weights over sleeping arms."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linprog

from .core import RngStream
from .environments.arms import ArmInstance
from .trace import RunTrace

ARM_STREAM = 41


@dataclass
class WeightState:
    log_weights: np.ndarray
    lam: np.ndarray
    mu: float
    delta_reg: float = 1.0

    def __post_init__(self):
        self.log_weights = np.asarray(self.log_weights, dtype=float)
        self.lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        if self.mu < 0 or self.delta_reg <= 0:
            raise ValueError("need mu >= 0 and delta_reg > 0")

    @classmethod
    def init(cls, K: int, N: int, mu: float, delta_reg: float = 1.0) -> "WeightState":
        return cls(np.zeros(K), np.zeros(N), mu, delta_reg)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights - self.log_weights.max())


@dataclass(frozen=True)
class Exp3Config:
    mu: float
    delta_reg: float = 1.0

    @classmethod
    def default(cls, T: int, c: float = 1.0, delta_reg: float = 1.0) -> "Exp3Config":
        return cls(mu=c / np.sqrt(T), delta_reg=delta_reg)


def _restrict(logw: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # Works on (..., K) stacks; the max is taken over available arms only.
    m = np.where(mask, logw, -np.inf).max(-1, keepdims=True)
    w = np.where(mask, np.exp(np.where(mask, logw - m, 0.0)), 0.0)
    return w / w.sum(-1, keepdims=True)


def restrict_distribution(state: WeightState, mask) -> np.ndarray:
    """Sampling distribution proportional to the weights of the available arms."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != state.log_weights.shape:
        raise ValueError("mask must have one entry per arm")
    if not mask.any():
        raise ValueError("no arm is available")
    return _restrict(state.log_weights, mask)


def importance_estimates(p, k: int, f_val: float, g_val):
    """Inverse-propensity estimates; nonzero only on the played arm.

    Returns ``(f_hat (K,), G_hat (N, K))``.
    """
    p = np.asarray(p, dtype=float)
    if not p[k] > 0:
        raise ValueError("played arm had zero probability")
    g_val = np.atleast_1d(np.asarray(g_val, dtype=float))
    f_hat = np.zeros_like(p)
    f_hat[k] = f_val / p[k]
    G_hat = np.zeros((g_val.shape[0], p.shape[0]))
    G_hat[:, k] = g_val / p[k]
    return f_hat, G_hat


def exp3sp_step(state: WeightState, p, f_hat, G_hat) -> WeightState:
    """Exponential-weight primal step and regularized dual step."""
    f_hat = np.asarray(f_hat, dtype=float)
    G_hat = np.atleast_2d(np.asarray(G_hat, dtype=float))
    if not (np.all(np.isfinite(f_hat)) and np.all(np.isfinite(G_hat))):
        raise FloatingPointError("non-finite importance estimate")
    mu = state.mu
    logw = state.log_weights - mu * (f_hat + state.lam @ G_hat)
    logw = logw - logw.max()  # scale-free renormalization
    lam = np.maximum(state.lam + mu * (G_hat @ np.asarray(p) - state.delta_reg * mu * state.lam), 0.0)
    return replace(state, log_weights=logw, lam=lam)


def multiplier_bound(mu: float, delta_reg: float, g_max: float, lam0: float = 0.0) -> float:
    """Invariant ceiling on the multiplier.

    ``g_max / (delta mu)`` is the fixed point of the dual recursion. When
    ``delta mu^2 > 1`` the shrink overshoots and one step can reach ``mu g_max``.
    """
    return max(lam0, g_max / (delta_reg * mu), mu * g_max)


def run_exp3sp_batch(insts: list[ArmInstance], cfg: Exp3Config, T: int, seeds,
                     env_name: str = "arms") -> list[RunTrace]:
    """Seed-batched EXP3SP; the play of seed ``s`` does not depend on the batch."""
    if T < 1:
        raise ValueError("horizon must be >= 1")
    seeds = list(seeds)
    S = len(insts)
    K = insts[0].arm_set.K
    N = insts[0].G.shape[-1]
    for inst in insts:
        if inst.horizon < T:
            raise ValueError("instance shorter than the horizon")
    masks = np.stack([i.arm_set.availability[:T] for i in insts])
    F = np.stack([i.F[:T] for i in insts])
    G = np.stack([i.G[:T] for i in insts])
    draws = np.stack([RngStream(s, ARM_STREAM).random(T) for s in seeds])
    logw = np.zeros((S, K))
    lam = np.zeros((S, N))
    mu, dr = cfg.mu, cfg.delta_reg
    rows = np.arange(S)
    P = np.zeros((S, T, K))
    arm = np.zeros((S, T), dtype=np.int64)
    L = np.zeros((S, T, N))
    for t in range(T):
        p = _restrict(logw, masks[:, t])
        cdf = np.cumsum(p, axis=-1)
        k = np.minimum((cdf < draws[:, t, None] * cdf[:, -1:]).sum(-1), K - 1)
        # Guard against landing on a zero-probability arm through rounding.
        bad = p[rows, k] <= 0
        if bad.any():
            k[bad] = np.argmax(p[bad], axis=-1)
        pk = p[rows, k]
        fv = F[:, t][rows, k]
        gv = G[:, t][rows, k]
        P[:, t], arm[:, t], L[:, t] = p, k, lam
        f_hat = np.zeros((S, K))
        f_hat[rows, k] = fv / pk
        # lam^T G_hat is nonzero only on the played arm.
        pen = np.zeros((S, K))
        pen[rows, k] = (lam * gv).sum(-1) / pk
        logw = logw - mu * (f_hat + pen)
        logw = logw - logw.max(-1, keepdims=True)
        # G_hat p equals the observed constraint value.
        lam = np.maximum(lam + mu * (gv - dr * mu * lam), 0.0)
    out = []
    for i, s in enumerate(seeds):
        inst = insts[i]
        k = arm[i]
        extras = {"arm": k}
        extras.update({f"p_{j}": P[i, :, j] for j in range(K)})
        out.append(RunTrace("exp3sp", env_name, s, inst.arm_set.arms[k], F[i][np.arange(T), k],
                            G[i][np.arange(T), k], L[i], extras=extras))
    return out


def run_exp3sp(inst: ArmInstance, cfg: Exp3Config, T: int, seed: int, env_name: str = "arms") -> RunTrace:
    return run_exp3sp_batch([inst], cfg, T, [seed], env_name)[0]


def best_fixed_distribution(F, G):
    """Best fixed distribution over all arms, feasible on the accumulated constraint.

    Solves ``min_p sum_t F_t p`` s.t. ``sum_t G_t p <= 0`` on the simplex as a
    linear program over the realized sequence. Returns ``(p, total_loss)``.
    """
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float).reshape(F.shape + (-1,))
    K = F.shape[1]
    c = F.sum(0)
    A_ub = G.sum(0).T
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(A_ub.shape[0]), A_eq=np.ones((1, K)), b_eq=[1.0],
                  bounds=[(0, 1)] * K, method="highs")
    if res.status != 0:
        raise ValueError(f"no feasible fixed distribution: {res.message}")
    p = np.clip(res.x, 0, None)
    p /= p.sum()
    return p, float(c @ p)


def exp3_regret(trace: RunTrace, inst: ArmInstance) -> float:
    T = trace.horizon
    _, best = best_fixed_distribution(inst.F[:T], inst.G[:T])
    return float(trace.loss.sum() - best)


def simplex_grid(K: int, resolution: int) -> np.ndarray:
    """All distributions on K arms with entries in multiples of ``1/resolution``."""
    from itertools import combinations

    # Stars and bars: choose K-1 cut positions among resolution + K - 1 slots.
    pts = []
    for cuts in combinations(range(resolution + K - 1), K - 1):
        prev, row = -1, []
        for c in cuts:
            row.append(c - prev - 1)
            prev = c
        row.append(resolution + K - 2 - prev)
        pts.append(row)
    return np.array(pts, dtype=float) / resolution


def best_fixed_restricted(F, G, masks, resolution: int = 40):
    """Brute-force best fixed distribution when each slot renormalizes it to the available arms.

    This is the comparator a sleeping learner can actually track: on slot ``t``
    the fixed ``p`` plays ``p * mask_t / sum(p * mask_t)`` (uniform over the
    available arms when that sum is zero). Returns ``(p, total_loss)``.
    """
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float).reshape(F.shape + (-1,))
    masks = np.asarray(masks, dtype=bool)
    K = F.shape[1]
    codes = masks.astype(np.int64) @ (1 << np.arange(K))
    uniq, inv = np.unique(codes, return_inverse=True)
    M = ((uniq[:, None] >> np.arange(K)) & 1).astype(float)  # (m, K)
    Fm = np.zeros((len(uniq), K))
    np.add.at(Fm, inv, F)
    Gm = np.zeros((len(uniq), K, G.shape[-1]))
    np.add.at(Gm, inv, G)
    P = simplex_grid(K, resolution)
    W = P[:, None, :] * M[None]  # (p, m, K)
    tot = W.sum(-1, keepdims=True)
    fallback = M / M.sum(-1, keepdims=True)
    Qm = np.where(tot > 0, W / np.where(tot > 0, tot, 1.0), fallback[None])
    loss = np.einsum("pmk,mk->p", Qm, Fm)
    cons = np.einsum("pmk,mkn->pn", Qm, Gm)
    # Exact grid mixtures can land on the boundary up to rounding.
    feasible = np.all(cons <= 1e-12 * max(1.0, float(np.abs(Gm).sum())), axis=-1)
    if not feasible.any():
        raise ValueError("no feasible fixed distribution on the grid")
    i = np.argmin(np.where(feasible, loss, np.inf))
    return P[i], float(loss[i])
