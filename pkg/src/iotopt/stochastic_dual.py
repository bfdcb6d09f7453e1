"""Dual learning for stochastic resource allocation.

The per-state problem is ``min_x f(x) + theta^T (A x + s)`` over a box, with a
separable convex quadratic ``f``; the state ``s`` enters the constraint as the
exogenous term. The empirical dual (with ridge ``eps``) is maximized by SAGA;
the learned multiplier is then blended with live queue lengths to price
allocations.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BoxSet, RngStream
from .environments.queues import QueueNetwork, QueueState, queue_step
from .trace import RunTrace

SAGA_STREAM = 22
OFFLINE_STREAM = 23


class NonConvexSubproblem(ValueError):
    pass


@dataclass(frozen=True)
class QuadraticFamily:
    """``f(x) = sum(a x^2 + b x) + f0`` and ``g(x; s) = A x + s`` on ``box``."""

    a: np.ndarray
    b: np.ndarray
    A: np.ndarray
    box: BoxSet
    f0: float = 0.0

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if np.any(a < 0):
            raise NonConvexSubproblem("negative curvature: subproblem is not convex")
        if b.shape != a.shape or A.shape[1] != a.shape[0] or self.box.dim != a.shape[0]:
            raise ValueError("family dimensions disagree")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A", A)

    @classmethod
    def from_network(cls, net: QueueNetwork) -> "QuadraticFamily":
        return cls(net.edge_a, net.edge_b, net.incidence, net.caps)

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0]

    def loss(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return ((self.a * x + self.b) * x).sum(-1) + self.f0

    def argmin(self, theta) -> np.ndarray:
        """Clamp of the unconstrained minimizer; works on stacked multipliers."""
        theta = np.asarray(theta, dtype=float)
        lin = self.b + theta @ self.A
        lo, hi = self.box.lower, self.box.upper
        with np.errstate(divide="ignore", invalid="ignore"):
            x = -lin / (2 * self.a)
        # Zero curvature: a linear term, minimized at the bound its sign points to.
        flat = self.a == 0
        if np.any(flat):
            x = np.where(flat, np.where(lin < 0, np.inf, -np.inf), x)
        return np.clip(x, lo, hi)

    def dual_grad(self, lam, s) -> np.ndarray:
        """Gradient of the per-state dual ``D(lam; s)``: the constraint at the argmin."""
        return self.argmin(lam) @ self.A.T + s

    def dual_value(self, lam, s) -> np.ndarray:
        x = self.argmin(lam)
        return self.loss(x) + (np.asarray(lam) * (x @ self.A.T + s)).sum(-1)

    def dual_smoothness(self) -> float:
        """Lipschitz constant of the dual gradient (curvature weighted incidence)."""
        pos = self.a > 0
        if not np.any(pos):
            return 0.0
        M = self.A[:, pos] / np.sqrt(2 * self.a[pos])
        return float(np.linalg.norm(M, 2) ** 2)


def lagrangian_argmin(s, theta, family: QuadraticFamily, box: BoxSet | None = None) -> np.ndarray:
    """Exact minimizer of ``f(x) + theta^T g(x; s)`` over the box.

    The state only shifts ``g`` by a constant, so it does not move the minimizer
    for this family; it is accepted for interface symmetry.
    """
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise ValueError("prices must be nonnegative")
    if box is not None and box is not family.box:
        fam = QuadraticFamily(family.a, family.b, family.A, box, family.f0)
        return fam.argmin(theta)
    return family.argmin(theta)


class _Growing:
    """Append-only row buffer with amortized doubling."""

    def __init__(self, width: int, rows=None):
        rows = np.zeros((0, width)) if rows is None else np.atleast_2d(np.asarray(rows, dtype=float))
        self._buf = np.zeros((max(16, 2 * len(rows)), width))
        self._buf[: len(rows)] = rows
        self.n = len(rows)

    def append(self, row):
        if self.n == len(self._buf):
            bigger = np.zeros((2 * len(self._buf), self._buf.shape[1]))
            bigger[: self.n] = self._buf[: self.n]
            self._buf = bigger
        self._buf[self.n] = row
        self.n += 1

    @property
    def data(self) -> np.ndarray:
        return self._buf[: self.n]


class DualErm:
    """Empirical dual over a (possibly growing) sample set, with ridge ``eps``."""

    def __init__(self, samples, eps: float, family: QuadraticFamily):
        if eps <= 0:
            raise ValueError("eps must be positive for a strongly concave dual")
        samples = np.atleast_2d(np.asarray(samples, dtype=float)) if len(samples) else \
            np.zeros((0, family.n_constraints))
        if samples.shape[1] != family.n_constraints:
            raise ValueError("state width must match the number of constraints")
        self.eps = float(eps)
        self.family = family
        self._rows = _Growing(family.n_constraints, samples)

    @property
    def samples(self) -> np.ndarray:
        return self._rows.data

    @property
    def n(self) -> int:
        return self._rows.n

    def add(self, s):
        self._rows.append(np.asarray(s, dtype=float))

    def value(self, lam) -> float:
        lam = np.asarray(lam, dtype=float)
        return float(self.family.dual_value(lam, self.samples).mean() - 0.5 * self.eps * lam @ lam)

    def grad(self, lam) -> np.ndarray:
        return self.family.dual_grad(lam, self.samples).mean(0) - self.eps * np.asarray(lam)

    def smoothness(self) -> float:
        return self.family.dual_smoothness() + self.eps

    def condition_number(self) -> float:
        return self.smoothness() / self.eps


def load_samples(path) -> np.ndarray:
    """Read states from a text table: one whitespace-separated vector per line."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # empty file: reported below
        data = np.loadtxt(Path(path), ndmin=2)
    if data.size == 0:
        raise ValueError("sample file is empty")
    return data


def solve_dual_erm(erm: DualErm, tol: float = 1e-13, max_iter: int = 1_000_000, lam0=None) -> np.ndarray:
    """Batch maximizer of the regularized empirical dual by projected gradient ascent."""
    step = 1.0 / erm.smoothness()
    lam = np.zeros(erm.family.n_constraints) if lam0 is None else np.asarray(lam0, dtype=float)
    for _ in range(max_iter):
        nxt = np.maximum(lam + step * erm.grad(lam), 0.0)
        if np.max(np.abs(nxt - lam)) <= tol:
            return nxt
        lam = nxt
    return lam


@dataclass
class SagaMemory:
    """Gradient table (one row per sample), its running mean and the iterate."""

    stored: np.ndarray
    running_avg: np.ndarray
    lam: np.ndarray
    _rows: _Growing = field(default=None, repr=False)

    def __post_init__(self):
        self._rows = _Growing(len(self.lam), self.stored)

    @classmethod
    def init(cls, erm: DualErm, lam0=None) -> "SagaMemory":
        lam = np.zeros(erm.family.n_constraints) if lam0 is None else np.maximum(np.asarray(lam0, float), 0)
        if erm.n:
            table = erm.family.dual_grad(lam, erm.samples)
            avg = table.mean(0)
        else:
            table, avg = np.zeros((0, len(lam))), np.zeros(len(lam))
        return cls(table, avg, lam)

    @property
    def table(self) -> np.ndarray:
        return self._rows.data

    @property
    def n(self) -> int:
        return self._rows.n


def _gen(rng):
    return rng.generator if isinstance(rng, RngStream) else rng


def saga_step(mem: SagaMemory, erm: DualErm, alpha: float, rng, index: int | None = None) -> SagaMemory:
    """One SAGA ascent step on a uniformly drawn sample (in place; returns ``mem``).

    The direction is ``fresh - stored[j] + (mean(stored) - eps * lam)``.
    """
    n = mem.n
    if n == 0:
        raise ValueError("SAGA needs at least one sample")
    j = int(_gen(rng).integers(n)) if index is None else int(index)
    table = mem._rows.data
    fresh = erm.family.dual_grad(mem.lam, erm.samples[j])
    old = table[j].copy()
    direction = fresh - old + (mem.running_avg - erm.eps * mem.lam)
    mem.lam = np.maximum(mem.lam + alpha * direction, 0.0)
    mem.running_avg = mem.running_avg + (fresh - old) / n
    table[j] = fresh
    return mem


def online_saga_slot(mem: SagaMemory, erm: DualErm, s_t, K: int, alpha: float, rng):
    """Append ``s_t`` (memory row = its fresh gradient), then run ``K`` SAGA steps."""
    if K < 1:
        raise ValueError("K must be >= 1")
    erm.add(s_t)
    g = erm.family.dual_grad(mem.lam, np.asarray(s_t, dtype=float))
    mem._rows.append(g)
    mem.running_avg = mem.running_avg + (g - mem.running_avg) / mem.n
    for _ in range(K):
        saga_step(mem, erm, alpha, rng)
    return mem, mem.lam.copy()


def sgd_dual_baseline(family: QuadraticFamily, states, alphas, eps: float, lam0=None) -> np.ndarray:
    """Projected stochastic ascent ``lam <- [lam + alpha_t (g(x*(lam); s_t) - eps lam)]^+``.

    Returns the iterates after each step, shape ``(len(states), N)``.
    """
    states = np.atleast_2d(np.asarray(states, dtype=float))
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), (len(states),))
    lam = np.zeros(family.n_constraints) if lam0 is None else np.asarray(lam0, dtype=float)
    out = np.zeros((len(states), family.n_constraints))
    for t, (s, a) in enumerate(zip(states, alphas)):
        lam = np.maximum(lam + a * (family.dual_grad(lam, s) - eps * lam), 0.0)
        out[t] = lam
    return out


# ---------------------------------------------------------------------------
# learn-and-adapt


@dataclass
class LearnAdaptState:
    lam: np.ndarray
    queues: QueueState
    mu: float
    b: np.ndarray
    last_theta: np.ndarray | None = None

    def effective_multiplier(self) -> np.ndarray:
        """``[lam + mu q - b]^+``; clamped so prices never subsidize violations."""
        return np.maximum(self.lam + self.mu * self.queues.q - self.b, 0.0)


@dataclass(frozen=True)
class LaSagaConfig:
    mu: float
    c_b: float = 1.0
    K: int = 6
    eps: float = 1e-2
    alpha: float | None = None  # defaults to 1 / (3 L)
    n_offline: int = 300

    def __post_init__(self):
        if self.mu <= 0 or self.c_b < 0 or self.K < 1:
            raise ValueError("need mu > 0, c_b >= 0 and K >= 1")

    def bias(self, N: int) -> np.ndarray:
        return np.full(N, self.c_b * np.sqrt(self.mu))


def la_saga_slot(state: LearnAdaptState, mem: SagaMemory, erm: DualErm, net: QueueNetwork, s_t, c_t,
                 K: int, cfg: LaSagaConfig, rng, alpha: float | None = None):
    """Refresh the statistical multiplier, price with the effective multiplier, advance queues."""
    if alpha is None:
        alpha = cfg.alpha if cfg.alpha is not None else 1.0 / (3.0 * erm.smoothness())
    mem, lam = online_saga_slot(mem, erm, s_t, K, alpha, rng)
    state.lam = lam
    theta = state.effective_multiplier()
    state.last_theta = theta
    x = lagrangian_argmin(s_t, theta, erm.family)
    net.queues = state.queues
    state.queues = queue_step(net, x, c_t)
    return state, x


def _queue_trace(algo, seed, X, C, Q, TH, family, extras) -> RunTrace:
    loss = family.loss(X)
    G = X @ family.A.T + C
    return RunTrace(algo, "queue", seed, X, loss, G, TH, queue=Q, extras=extras)


def offline_samples(net: QueueNetwork, n: int, seed: int) -> np.ndarray:
    return net.draw_exogenous(n, seed, OFFLINE_STREAM) if n else np.zeros((0, net.n_nodes))


def run_la_saga(net: QueueNetwork, cfg: LaSagaConfig, T: int, seed: int, offline=None) -> RunTrace:
    """Learn-and-adapt over ``T`` slots with an optional offline warm-up.

    The offline phase runs ``K * N0`` SAGA steps over ``N0`` historical states
    (drawn from a separate stream unless ``offline`` is given).
    """
    if T < 1:
        raise ValueError("horizon must be >= 1")
    family = QuadraticFamily.from_network(net)
    N = family.n_constraints
    hist = offline_samples(net, cfg.n_offline, seed) if offline is None else np.atleast_2d(offline)
    erm = DualErm(hist, cfg.eps, family)
    if erm.n and erm.n < 0.75 * erm.condition_number():
        warnings.warn(f"offline set of {erm.n} states is below 3/4 of the condition number "
                      f"{erm.condition_number():.0f}", RuntimeWarning, stacklevel=2)
    rng = RngStream(seed, SAGA_STREAM)
    alpha = cfg.alpha if cfg.alpha is not None else 1.0 / (3.0 * erm.smoothness())
    mem = SagaMemory.init(erm)
    for _ in range(cfg.K * erm.n):
        saga_step(mem, erm, alpha, rng)
    C = net.draw_exogenous(T, seed)
    state = LearnAdaptState(mem.lam.copy(), QueueState(np.zeros(N)), cfg.mu, cfg.bias(N))
    X, Q, TH, LS = np.zeros((T, net.n_edges)), np.zeros((T, N)), np.zeros((T, N)), np.zeros((T, N))
    for t in range(T):
        state, x = la_saga_slot(state, mem, erm, net, C[t], C[t], cfg.K, cfg, rng, alpha)
        X[t], Q[t], LS[t], TH[t] = x, state.queues.q, state.lam, state.last_theta
    extras = {f"lam_stat_{i}": LS[:, i] for i in range(N)}
    return _queue_trace("la-saga", seed, X, C, Q, TH, family, extras)


def run_queue_price(net: QueueNetwork, mu: float, T: int, seed: int) -> RunTrace:
    """Baseline that prices with the scaled backlog alone, ``theta = mu q``."""
    if T < 1:
        raise ValueError("horizon must be >= 1")
    family = QuadraticFamily.from_network(net)
    N = family.n_constraints
    C = net.draw_exogenous(T, seed)
    q = np.zeros(N)
    X, Q, TH = np.zeros((T, net.n_edges)), np.zeros((T, N)), np.zeros((T, N))
    A = family.A
    for t in range(T):
        theta = mu * q
        x = family.argmin(theta)
        q = np.maximum(q + A @ x + C[t], 0.0)
        X[t], Q[t], TH[t] = x, q, theta
    return _queue_trace("queue-price", seed, X, C, Q, TH, family, {})


def stationary_optimum(net: QueueNetwork, eps: float = 0.0):
    """Optimal constant allocation against the mean exogenous input.

    Because ``f`` does not depend on the state and the state only shifts the
    constraint, the stationary problem reduces to one deterministic program.
    Returns ``(x, lam, f)``.
    """
    from .benchmark import clairvoyant_quadratic

    family = QuadraticFamily.from_network(net)
    c_mean = 0.5 * (net.arrivals.low + net.arrivals.high) - net.service
    x, lam, _ = clairvoyant_quadratic(family.a, family.b, c_mean, family.A, family.box, tol=1e-12)
    return x, lam, float(family.loss(x))
