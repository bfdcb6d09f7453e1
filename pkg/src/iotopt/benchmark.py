"""Clairvoyant comparators and regret/fit metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .core import BoxSet, project_box
from .environments.slots import QuadraticSlot, SlotFunctions
from .trace import RunTrace


class InfeasibleSlot(ValueError):
    """No point of the box satisfies the slot constraint."""


class InsufficientPoints(ValueError):
    """Too few horizons to fit a slope."""


@dataclass
class Comparator:
    x_star: np.ndarray  # (T, d)
    f_star: np.ndarray  # (T,)
    lam_star: np.ndarray | None = None

    @property
    def horizon(self) -> int:
        return self.f_star.shape[0]

    @property
    def path_variation(self) -> float:
        return path_variation(self.x_star)

    def prefix(self, T: int) -> "Comparator":
        lam = None if self.lam_star is None else self.lam_star[:T]
        return Comparator(self.x_star[:T], self.f_star[:T], lam)


def path_variation(x_star) -> float:
    x_star = np.asarray(x_star, dtype=float)
    if len(x_star) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(x_star, axis=0), axis=1).sum())


# ---------------------------------------------------------------------------
# clairvoyant solvers


def _box_arrays(box: BoxSet, d: int):
    if box.dim != d:
        raise ValueError("box dimension mismatch")
    return box.lower, box.upper


def clairvoyant_quadratic(a, b, c, B, box: BoxSet, tol: float = 1e-8, max_iter: int = 100,
                          lam0=None):
    """Solve ``min sum(a x^2 + b x) s.t. c + B x <= 0, x in box`` for many slots at once.

    ``a``, ``b`` have shape ``(..., d)`` and ``c`` shape ``(..., N)``; ``B`` is shared.
    Projected Newton ascent on the concave dual with an Armijo backtracking search;
    the primal point is the closed-form clamp minimizer of the Lagrangian.
    Requires ``a > 0``. ``lam0`` warm-starts the multipliers (broadcast to every
    slot). Returns ``(x, lam, kkt)``.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    B = np.asarray(B, dtype=float)
    N, d = B.shape
    if np.any(a <= 0):
        raise ValueError("fast comparator needs strictly positive curvature")
    lo, hi = _box_arrays(box, d)
    shape = c.shape[:-1]
    af, bf, cf = a.reshape(-1, d), b.reshape(-1, d), c.reshape(-1, N)
    n = cf.shape[0]

    def primal(lam, aa, bb):
        return np.clip(-(bb + lam @ B) / (2 * aa), lo, hi)

    def dual(lam, aa, bb, cc):
        x = primal(lam, aa, bb)
        return ((aa * x + bb) * x).sum(-1) + (lam * (cc + x @ B.T)).sum(-1), x

    lam = np.zeros((n, N)) if lam0 is None else np.broadcast_to(np.maximum(lam0, 0.0), (n, N)).copy()
    Dv, x = dual(lam, af, bf, cf)
    eye = np.eye(N)
    ridge = 1e-9 * eye
    kkt = np.zeros(n)
    for _ in range(max_iter):
        gr = cf + x @ B.T
        kkt = np.abs(np.minimum(-gr, lam)).max(-1)
        act = np.nonzero(kkt > tol)[0]
        if act.size == 0:
            break
        L, aa, bb, cc = lam[act], af[act], bf[act], cf[act]
        xx, gg, dv = x[act], gr[act], Dv[act]
        free = ((xx > lo) & (xx < hi)).astype(float)
        H = (B[None] * (free / (2 * aa))[:, None, :]) @ B.T + ridge
        bind = (L <= 0) & (gg < 0)
        Hm = np.where(bind[:, :, None] | bind[:, None, :], 0.0, H) + np.where(bind[:, :, None], eye, 0.0)
        step = np.linalg.solve(Hm, np.where(bind, 0.0, gg)[..., None])[..., 0]
        t_ = np.ones(act.size)
        pend = np.arange(act.size)
        newL, newD, newx = L.copy(), dv.copy(), xx.copy()
        for _ls in range(60):
            lc = np.maximum(L[pend] + t_[pend, None] * step[pend], 0.0)
            Dn, xn = dual(lc, aa[pend], bb[pend], cc[pend])
            ok = Dn >= dv[pend] - 1e-14 * np.abs(dv[pend])
            sel = pend[ok]
            newL[sel], newD[sel], newx[sel] = lc[ok], Dn[ok], xn[ok]
            pend = pend[~ok]
            if pend.size == 0:
                break
            t_[pend] *= 0.5
        lam[act], Dv[act], x[act] = newL, newD, newx
    gr = cf + x @ B.T
    kkt = np.abs(np.minimum(-gr, lam)).max(-1)
    if np.any(gr.max(-1) > max(1e-6, 1e3 * tol)):
        raise InfeasibleSlot("comparator could not reach a feasible point; check the Slater margin")
    return x.reshape(shape + (d,)), lam.reshape(shape + (N,)), kkt.reshape(shape)


def _kkt_residual(x, lam, grad, g, jac, box: BoxSet) -> float:
    stat = np.abs(x - project_box(x - (grad + jac.T @ lam), box)).max()
    feas = max(float(np.max(g)), 0.0)
    comp = float(np.max(np.abs(lam * g))) if lam.size else 0.0
    return max(stat, feas, comp)


def clairvoyant_slot(slot_fns: SlotFunctions, box: BoxSet, tol: float = 1e-8, max_outer: int = 200):
    """Per-slot constrained minimizer of ``f_t`` over ``{x in box : g_t(x) <= 0}``.

    Quadratic separable slots use the dual Newton solver. Other slots run an
    augmented-Lagrangian primal-dual loop whose box-constrained inner problems
    are solved by L-BFGS-B; multipliers are updated by projected ascent until
    the KKT residual drops below ``tol``.
    """
    if isinstance(slot_fns, QuadraticSlot) and np.all(slot_fns.a > 0):
        x, _, _ = clairvoyant_quadratic(slot_fns.a, slot_fns.b, slot_fns.c, slot_fns.B, box, tol)
        return x
    fns = slot_fns.oracle()
    d = fns.dim
    _box_arrays(box, d)
    x = box.center.copy()
    lam = np.zeros(fns.n_constraints)
    rho = 10.0
    bounds = list(zip(box.lower, box.upper))
    best, best_res = x, np.inf
    for _ in range(max_outer):
        def obj(z, lam=lam):
            g = fns.constraint(z)
            shifted = np.maximum(lam + rho * g, 0.0)
            val = fns._f(z) + (shifted @ shifted - lam @ lam) / (2 * rho)
            grad = fns.gradient(z) + fns.jacobian(z).T @ shifted
            return val, grad

        res = minimize(obj, x, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"ftol": 1e-16, "gtol": 1e-13, "maxiter": 2000})
        x = np.clip(res.x, box.lower, box.upper)
        g = fns.constraint(x)
        lam = np.maximum(lam + rho * g, 0.0)
        r = _kkt_residual(x, lam, fns.gradient(x), g, fns.jacobian(x), box)
        if r < best_res:
            best, best_res = x, r
        if r <= tol:
            break
    if np.max(fns.constraint(best)) > max(1e-6, 1e3 * tol):
        raise InfeasibleSlot("no feasible point found for this slot")
    return best


def fog_comparator(inst, tol: float = 1e-8) -> Comparator:
    """Clairvoyant sequence for a realized quadratic environment."""
    a, b = inst.a, inst.b
    # Warm start every slot from the multiplier of a short pilot solve.
    pilot = slice(0, min(inst.horizon, 64))
    _, lam_p, _ = clairvoyant_quadratic(a[pilot], b[pilot], inst.demands[pilot], inst.incidence, inst.box, tol)
    x, lam, _ = clairvoyant_quadratic(a, b, inst.demands, inst.incidence, inst.box, tol,
                                      lam0=np.median(lam_p, axis=0))
    f = ((a * x + b) * x).sum(-1)
    return Comparator(x, f, lam)


# ---------------------------------------------------------------------------
# metrics


def regret_curve(trace: RunTrace, comp: Comparator) -> np.ndarray:
    if trace.horizon != comp.horizon:
        raise ValueError(f"trace has {trace.horizon} slots, comparator {comp.horizon}")
    return np.cumsum(trace.loss - comp.f_star)


def dynamic_regret(trace: RunTrace, comp: Comparator) -> float:
    if trace.horizon != comp.horizon:
        raise ValueError(f"trace has {trace.horizon} slots, comparator {comp.horizon}")
    return float(trace.loss.sum() - comp.f_star.sum())


def fit_curve(trace_or_g) -> np.ndarray:
    g = trace_or_g.constraint if isinstance(trace_or_g, RunTrace) else np.asarray(trace_or_g, dtype=float)
    g = g.reshape(len(g), -1)
    return np.linalg.norm(np.maximum(np.cumsum(g, axis=0), 0.0), axis=1)


def dynamic_fit(trace_or_g) -> float:
    """Norm of the positive part of the accumulated constraint values."""
    g = trace_or_g.constraint if isinstance(trace_or_g, RunTrace) else np.asarray(trace_or_g, dtype=float)
    g = g.reshape(len(g), -1)
    return float(np.linalg.norm(np.maximum(g.sum(0), 0.0)))


@dataclass
class SlopeFit:
    slope: float
    stderr: float
    intercept: float
    r2: float
    n_points: int
    better_than_power_law: bool = False

    def as_dict(self) -> dict:
        return {"slope": self.slope, "stderr": self.stderr, "intercept": self.intercept,
                "r2": self.r2, "n_points": self.n_points,
                "better_than_power_law": self.better_than_power_law}


def slope_estimate(horizons, values) -> SlopeFit:
    """Least-squares slope of ``log(value)`` against ``log(T)``.

    Nonpositive values carry no power-law information and are dropped. When at
    least four horizons were supplied but fewer than four positive values
    remain, the metric is reported as better than any power law.
    """
    T = np.asarray(horizons, dtype=float)
    v = np.asarray(values, dtype=float)
    if T.shape != v.shape:
        raise ValueError("horizons and values must align")
    if T.size < 4:
        raise InsufficientPoints("need at least 4 horizons")
    keep = v > 0
    if keep.sum() < 4:
        return SlopeFit(-np.inf, 0.0, np.nan, np.nan, int(keep.sum()), True)
    x, y = np.log(T[keep]), np.log(v[keep])
    X = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    n = x.size
    sxx = ((x - x.mean()) ** 2).sum()
    sse = float(resid @ resid)
    stderr = float(np.sqrt(sse / (n - 2) / sxx)) if n > 2 else 0.0
    sst = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - sse / sst if sst > 0 else 1.0
    return SlopeFit(float(coef[0]), stderr, float(coef[1]), r2, n)


@dataclass
class MetricReport:
    horizon: int
    regret_T: float
    fit_T: float
    path_variation: float
    regret_curve: np.ndarray = field(repr=False)
    fit_curve: np.ndarray = field(repr=False)

    def as_dict(self) -> dict:
        return {"horizon": self.horizon, "regret": self.regret_T, "fit": self.fit_T,
                "path_variation": self.path_variation}


def build_report(trace: RunTrace, comp: Comparator | None) -> MetricReport:
    fc = fit_curve(trace)
    if comp is None:
        rc = np.full(trace.horizon, np.nan)
        return MetricReport(trace.horizon, float("nan"), float(fc[-1]), float("nan"), rc, fc)
    rc = regret_curve(trace, comp)
    return MetricReport(trace.horizon, float(rc[-1]), float(fc[-1]), comp.path_variation, rc, fc)
