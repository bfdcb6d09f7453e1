"""Online primal-dual methods with long-term constraints.

``mosp_step`` is the full-information modified saddle-point recursion;
``bansp_step`` replaces the loss gradient by a zeroth-order estimate built from
one or several loss values and plays inside a shrunk box so that perturbed
points stay feasible.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import BoxSet, DimensionError, RngStream, ShrunkSet, project_box, sample_unit_sphere, shrink_box
from .environments.slots import FeedbackError, FeedbackMode, SlotFunctions
from .trace import RunTrace

ALGOS = ("mosp", "bansp-1", "bansp-M")
# Random stream id for perturbation directions.
DIRECTION_STREAM = 7


class InfeasiblePerturbation(ValueError):
    """A perturbed evaluation point left the base box (delta/gamma mismatch)."""


@dataclass(frozen=True)
class SaddleConfig:
    alpha: float
    mu: float
    adaptive: bool = False
    eps0: float = 1e-8
    delta: float = 0.0
    gamma: float = 0.0
    M: int = 1

    def __post_init__(self):
        if self.alpha <= 0 or self.mu <= 0:
            raise ValueError("stepsizes alpha and mu must be positive")
        if self.eps0 <= 0:
            raise ValueError("eps0 must be positive")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if self.M < 1 or (self.M >= 2 and self.M % 2):
            raise ValueError("M must be 1 or an even number of paired evaluations")

    def check_bandit(self, box: BoxSet):
        if self.delta <= 0:
            raise ValueError("bandit mode needs delta > 0")
        if self.delta > self.gamma * box.inradius * (1 + 1e-12):
            raise ValueError(f"delta={self.delta} exceeds gamma*inradius={self.gamma * box.inradius}")

    @classmethod
    def mosp(cls, T: int, c: float = 1.0, adaptive: bool = False, eps0: float = 1e-8) -> "SaddleConfig":
        step = c / np.sqrt(T)
        return cls(alpha=step, mu=step, adaptive=adaptive, eps0=eps0)

    @classmethod
    def bansp_one_point(cls, T: int, box: BoxSet, c: float = 1.0, c_delta: float = 1.0) -> "SaddleConfig":
        """Orders T^{-3/4} for the stepsizes, T^{-1/4} for the radius (scaled by the inradius)."""
        r = box.inradius
        delta = c_delta * r / T ** 0.25
        return cls(alpha=c / T ** 0.75, mu=c / T ** 0.75, delta=delta, gamma=min(delta / r, 1 - 1e-12))

    @classmethod
    def bansp_multi_point(cls, T: int, box: BoxSet, M: int = 4, c: float = 1.0,
                          c_delta: float = 1.0) -> "SaddleConfig":
        r = box.inradius
        delta = c_delta * r / np.sqrt(T)
        return cls(alpha=c / np.sqrt(T), mu=c / np.sqrt(T), delta=delta,
                   gamma=min(delta / r, 1 - 1e-12), M=M)

    @classmethod
    def default(cls, algo: str, T: int, box: BoxSet, **kw) -> "SaddleConfig":
        if algo == "mosp":
            return cls.mosp(T, **kw)
        if algo == "bansp-1":
            return cls.bansp_one_point(T, box, **kw)
        if algo == "bansp-M":
            return cls.bansp_multi_point(T, box, **kw)
        raise ValueError(f"unknown saddle algorithm {algo!r}")


@dataclass
class AlgoState:
    x_hat: np.ndarray
    lam: np.ndarray
    grad_accum: np.ndarray
    slot: int = 0
    # Points actually queried in the last slot and their loss values.
    played: np.ndarray | None = None
    played_values: np.ndarray | None = None

    @classmethod
    def init(cls, x0, n_constraints: int, lam0=None) -> "AlgoState":
        x0 = np.asarray(x0, dtype=float)
        lam = np.zeros(n_constraints) if lam0 is None else np.maximum(np.asarray(lam0, dtype=float), 0)
        return cls(x0.copy(), lam, np.zeros_like(x0))


def _stepsize(cfg: SaddleConfig, accum: np.ndarray):
    if cfg.adaptive:
        return cfg.alpha / np.sqrt(cfg.eps0 + accum)
    return cfg.alpha


def _primal_dual(state: AlgoState, grad_f, g, jac, cfg: SaddleConfig, box: BoxSet) -> AlgoState:
    grad_L = grad_f + jac.T @ state.lam
    accum = state.grad_accum + grad_L ** 2 if cfg.adaptive else state.grad_accum
    x_new = project_box(state.x_hat - _stepsize(cfg, accum) * grad_L, box)
    lam_new = np.maximum(state.lam + cfg.mu * (g + jac @ (x_new - state.x_hat)), 0.0)
    return AlgoState(x_new, lam_new, accum, state.slot + 1)


def mosp_step(state: AlgoState, slot_fns: SlotFunctions, cfg: SaddleConfig, box: BoxSet) -> AlgoState:
    """One full-information slot: projected descent on x, corrected ascent on lambda."""
    if slot_fns.mode is not FeedbackMode.FULL:
        raise FeedbackError("mosp_step needs full-information feedback")
    x = state.x_hat
    new = _primal_dual(state, slot_fns.gradient(x), slot_fns.constraint(x), slot_fns.jacobian(x), cfg, box)
    new.played = x[None, :].copy()
    new.played_values = np.array([slot_fns.value(x)])
    return new


def one_point_gradient(slot_fns: SlotFunctions, x_hat, delta: float, rng=None, u=None,
                       box: BoxSet | None = None):
    """Single-evaluation estimate ``(d/delta) f(x_hat + delta u) u``.

    Returns ``(estimate, played_point, value)``. Pass ``u`` to reuse a pre-drawn
    direction; otherwise one is drawn from ``rng``.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    d = x_hat.shape[0]
    if u is None:
        u = sample_unit_sphere(d, rng)
    x_play = x_hat + delta * np.asarray(u, dtype=float)
    if box is not None and not box.contains(x_play, tol=1e-12):
        raise InfeasiblePerturbation("perturbed point left the feasible box")
    val = slot_fns.value(x_play)
    return (d / delta) * val * u, x_play, val


def multi_point_gradient(slot_fns: SlotFunctions, x_hat, delta: float, M: int, rng=None, U=None,
                         box: BoxSet | None = None):
    """Average of ``M/2`` symmetric differences along independent directions.

    Returns ``(estimate, played_points (M, d), values (M,))``.
    """
    if M < 2 or M % 2:
        raise ValueError("multi-point estimation needs an even M >= 2")
    x_hat = np.asarray(x_hat, dtype=float)
    d = x_hat.shape[0]
    pairs = M // 2
    if U is None:
        U = sample_unit_sphere(d, rng, size=pairs)
    U = np.asarray(U, dtype=float).reshape(pairs, d)
    est = np.zeros(d)
    pts, vals = [], []
    for u in U:
        xp, xm = x_hat + delta * u, x_hat - delta * u
        if box is not None and not (box.contains(xp, tol=1e-12) and box.contains(xm, tol=1e-12)):
            raise InfeasiblePerturbation("perturbed point left the feasible box")
        fp, fm = slot_fns.value(xp), slot_fns.value(xm)
        est += (d / (2 * delta)) * (fp - fm) * u
        pts += [xp, xm]
        vals += [fp, fm]
    return est / pairs, np.array(pts), np.array(vals)


def bansp_step(state: AlgoState, slot_fns: SlotFunctions, cfg: SaddleConfig, shrunk: ShrunkSet,
               rng=None, directions=None, grad_estimate=None) -> AlgoState:
    """One bandit slot.

    The loss gradient is estimated from loss values only (one-point when
    ``cfg.M == 1``, paired multi-point otherwise) unless ``grad_estimate`` is
    supplied. Constraints and their Jacobian are exact and evaluated at the
    center point ``x_hat``; the primal step projects onto the shrunk box.
    """
    if slot_fns.mode is FeedbackMode.FULL and grad_estimate is None:
        raise FeedbackError("bansp_step expects bandit feedback")
    x = state.x_hat
    base = shrunk.base
    played = vals = None
    if grad_estimate is None:
        cfg.check_bandit(base)
        if cfg.M == 1:
            grad_estimate, xp, v = one_point_gradient(slot_fns, x, cfg.delta, rng, directions, base)
            played, vals = xp[None, :], np.array([v])
        else:
            grad_estimate, played, vals = multi_point_gradient(slot_fns, x, cfg.delta, cfg.M, rng,
                                                               directions, base)
    new = _primal_dual(state, np.asarray(grad_estimate, dtype=float), slot_fns.constraint(x),
                       slot_fns.jacobian(x), cfg, shrunk.box)
    new.played, new.played_values = played, vals
    return new


# ---------------------------------------------------------------------------
# runners


def _start_point(box: BoxSet, algo: str, x0) -> np.ndarray:
    if x0 is not None:
        return np.asarray(x0, dtype=float)
    # Bandit variants must start inside the shrunk box; the center always is.
    return box.lower.copy() if algo == "mosp" else box.center


def _pairs(algo: str, cfg: SaddleConfig) -> int:
    return 0 if algo == "mosp" else max(cfg.M // 2, 1)


def _check_algo(algo: str, cfg: SaddleConfig, mode: FeedbackMode):
    if algo not in ALGOS:
        raise ValueError(f"unknown saddle algorithm {algo!r}")
    want = {"mosp": FeedbackMode.FULL, "bansp-1": FeedbackMode.ONE_POINT,
            "bansp-M": FeedbackMode.MULTI_POINT}[algo]
    if mode is not want:
        raise FeedbackError(f"{algo} needs {want.value} feedback, environment provides {mode.value}")
    if (algo == "bansp-1") != (cfg.M == 1) and algo != "mosp":
        raise ValueError("bansp-1 needs M = 1 and bansp-M needs M >= 2")


def draw_directions(seed: int, T: int, d: int, pairs: int) -> np.ndarray:
    """Perturbation directions for a whole run, shape ``(T, pairs, d)``."""
    return sample_unit_sphere(d, RngStream(seed, DIRECTION_STREAM), size=(T, pairs))


def run_saddle_generic(env, algo: str, cfg: SaddleConfig, T: int, seed: int, x0=None,
                       lam0=None) -> RunTrace:
    """Slot-by-slot runner over ``env.slot(t)`` using the step functions.

    Works for any environment exposing ``slot(t)``, ``box`` and ``mode``.
    """
    if T < 1:
        raise ValueError("horizon must be >= 1")
    _check_algo(algo, cfg, env.mode)
    box = env.box
    first = env.slot(0)
    d, N = first.dim, first.n_constraints
    state = AlgoState.init(_start_point(box, algo, x0), N, lam0)
    shrunk = shrink_box(box, cfg.gamma)
    pairs = _pairs(algo, cfg)
    U = draw_directions(seed, T, d, pairs) if pairs else None
    X, F, G, L = np.zeros((T, d)), np.zeros(T), np.zeros((T, N)), np.zeros((T, N))
    for t in range(T):
        fns = first if t == 0 else env.slot(t)
        L[t] = state.lam
        if algo == "mosp":
            new = mosp_step(state, fns, cfg, box)
            X[t] = state.x_hat
        else:
            dirs = U[t, 0] if cfg.M == 1 else U[t]
            new = bansp_step(state, fns, cfg, shrunk, directions=dirs)
            X[t] = new.played[0] if cfg.M == 1 else state.x_hat
        F[t] = new.played_values.mean()
        G[t] = np.mean([fns.constraint(p) for p in new.played], axis=0)
        state = new
    extras = {} if not pairs else {"rng_draws": np.full(T, pairs * d, dtype=np.int64)}
    return RunTrace(algo, getattr(env, "name", "fog"), seed, X, F, G, L, extras=extras)


def _psum_last(M):
    return M.sum(-1)


def run_saddle_batch(envs, algo: str, cfg: SaddleConfig, T: int, seeds, x0=None, lam0=None,
                     env_name: str = "fog") -> list[RunTrace]:
    """Vectorized runner for quadratic environments, one trace per seed.

    Each environment must expose per-slot coefficient arrays ``a``, ``b``
    (``(T, d)``), ``demands`` (``(T, N)``), a shared ``incidence`` matrix ``B`` and
    ``box``. Reductions use fixed-order sums, so a batch of one seed reproduces
    the batched result for that seed bit for bit.
    """
    if T < 1:
        raise ValueError("horizon must be >= 1")
    seeds = list(seeds)
    if len(seeds) != len(envs):
        raise ValueError("one environment per seed")
    for e in envs:
        _check_algo(algo, cfg, e.mode)
        if e.horizon < T:
            raise ValueError("environment shorter than the horizon")
    B = envs[0].incidence
    box = envs[0].box
    S = len(envs)
    N, d = B.shape
    A_ = np.stack([e.a[:T] for e in envs])
    Bc = np.stack([e.b[:T] for e in envs])
    D = np.stack([e.demands[:T] for e in envs])
    pairs = _pairs(algo, cfg)
    if pairs:
        cfg.check_bandit(box)
        U = np.stack([draw_directions(s, T, d, pairs) for s in seeds])
        play_box = shrink_box(box, cfg.gamma).box
    else:
        play_box = box
    lo, hi = play_box.lower, play_box.upper
    x = np.broadcast_to(_start_point(box, algo, x0), (S, d)).copy()
    lam = np.zeros((S, N)) if lam0 is None else np.broadcast_to(np.maximum(lam0, 0), (S, N)).copy()
    accum = np.zeros((S, d))
    X, F, G, L = np.zeros((S, T, d)), np.zeros((S, T)), np.zeros((S, T, N)), np.zeros((S, T, N))
    Bt = B[None, :, :]

    def quad(a, b, z):
        return _psum_last((a * z + b) * z)

    def cons(dm, z):
        return dm + _psum_last(Bt * z[:, None, :])

    delta = cfg.delta
    for t in range(T):
        a, b, dm = A_[:, t], Bc[:, t], D[:, t]
        L[:, t] = lam
        g = cons(dm, x)
        if algo == "mosp":
            X[:, t] = x
            F[:, t] = quad(a, b, x)
            G[:, t] = g
            grad = 2.0 * a * x + b
        elif cfg.M == 1:
            u = U[:, t, 0]
            xp = x + delta * u
            fv = quad(a, b, xp)
            X[:, t] = xp
            F[:, t] = fv
            G[:, t] = cons(dm, xp)
            grad = (d / delta) * fv[:, None] * u
        else:
            grad = np.zeros((S, d))
            fsum = np.zeros(S)
            gsum = np.zeros((S, N))
            for k in range(pairs):
                u = U[:, t, k]
                xp, xm = x + delta * u, x - delta * u
                fp, fm = quad(a, b, xp), quad(a, b, xm)
                grad += (d / (2 * delta)) * (fp - fm)[:, None] * u
                fsum += fp + fm
                gsum += cons(dm, xp) + cons(dm, xm)
            grad /= pairs
            X[:, t] = x
            F[:, t] = fsum / (2 * pairs)
            G[:, t] = gsum / (2 * pairs)
        grad_L = grad + (lam[:, :, None] * Bt).sum(1)
        if cfg.adaptive:
            accum = accum + grad_L ** 2
            step = cfg.alpha / np.sqrt(cfg.eps0 + accum)
        else:
            step = cfg.alpha
        x_new = np.minimum(np.maximum(x - step * grad_L, lo), hi)
        lam = np.maximum(lam + cfg.mu * (g + _psum_last(Bt * (x_new - x)[:, None, :])), 0.0)
        x = x_new
    out = []
    for i, s in enumerate(seeds):
        extras = {} if not pairs else {"rng_draws": np.full(T, pairs * d, dtype=np.int64)}
        out.append(RunTrace(algo, env_name, s, X[i], F[i], G[i], L[i], extras=extras))
    return out


def run_saddle(env, algo: str, cfg: SaddleConfig, T: int, seed: int, x0=None, lam0=None) -> RunTrace:
    """Play ``T`` slots of ``algo`` on ``env``; deterministic given ``seed``.

    Quadratic environments take the vectorized path; anything else falls back
    to the slot-by-slot step functions.
    """
    if T < 1:
        raise ValueError("horizon must be >= 1")
    if all(hasattr(env, k) for k in ("a", "b", "demands", "incidence")):
        return run_saddle_batch([env], algo, cfg, T, [seed], x0, lam0,
                                env_name=getattr(env, "name", "fog"))[0]
    return run_saddle_generic(env, algo, cfg, T, seed, x0, lam0)
