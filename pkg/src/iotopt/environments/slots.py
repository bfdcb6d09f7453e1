"""Per-slot loss/constraint bundles with feedback gating."""

from __future__ import annotations

from enum import Enum
from typing import Callable

import numpy as np


class FeedbackMode(str, Enum):
    FULL = "full-info"
    ONE_POINT = "one-point"
    MULTI_POINT = "multi-point"
    ARM_VALUE = "arm-value"

    @classmethod
    def parse(cls, value) -> "FeedbackMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value))
        except ValueError:
            raise ValueError(f"unknown feedback mode {value!r}; expected one of "
                             f"{[m.value for m in cls]}") from None


class FeedbackError(RuntimeError):
    """An algorithm asked for more information than its feedback mode allows."""


class SlotFunctions:
    """Loss ``f_t`` and constraint map ``g_t`` for a single slot.

    Loss values are rationed: in the bandit modes an algorithm gets exactly
    ``budget`` evaluations and no gradient. Constraints are explicit formulas
    and stay available in every mode. The benchmark reaches the unrestricted
    functions through :meth:`oracle`.
    """

    def __init__(self, f: Callable, grad_f: Callable | None, g: Callable, jac_g: Callable,
                 dim: int, n_constraints: int, mode=FeedbackMode.FULL, budget: int | None = None):
        self._f = f
        self._grad_f = grad_f
        self._g = g
        self._jac_g = jac_g
        self.dim = int(dim)
        self.n_constraints = int(n_constraints)
        self.mode = FeedbackMode.parse(mode)
        if budget is None:
            budget = {FeedbackMode.FULL: None, FeedbackMode.ONE_POINT: 1,
                      FeedbackMode.ARM_VALUE: 1, FeedbackMode.MULTI_POINT: 2}[self.mode]
        self.budget = budget
        self.evaluations = 0

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point of length {self.dim}, got shape {x.shape}")
        return x

    def value(self, x) -> float:
        """Loss at ``x``; counted against the slot's evaluation budget."""
        x = self._check(x)
        if self.budget is not None and self.evaluations >= self.budget:
            raise FeedbackError(f"{self.mode.value} feedback allows {self.budget} "
                                f"loss evaluation(s) per slot")
        self.evaluations += 1
        return float(self._f(x))

    def gradient(self, x) -> np.ndarray:
        if self.mode is not FeedbackMode.FULL or self._grad_f is None:
            raise FeedbackError(f"loss gradient is not observable under {self.mode.value} feedback")
        return np.asarray(self._grad_f(self._check(x)), dtype=float)

    def constraint(self, x) -> np.ndarray:
        return np.asarray(self._g(self._check(x)), dtype=float)

    def jacobian(self, x) -> np.ndarray:
        """Constraint Jacobian, shape ``(n_constraints, dim)``."""
        return np.asarray(self._jac_g(self._check(x)), dtype=float)

    def oracle(self) -> "SlotFunctions":
        """Unrestricted full-information view, reserved for the benchmark."""
        return SlotFunctions(self._f, self._grad_f, self._g, self._jac_g, self.dim,
                             self.n_constraints, FeedbackMode.FULL)


class QuadraticSlot(SlotFunctions):
    """Separable quadratic loss ``sum(a z^2 + b z) + f0`` with affine ``g = c + B x``."""

    def __init__(self, a, b, c, B, f0: float = 0.0, mode=FeedbackMode.FULL, budget=None):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.c = np.atleast_1d(np.asarray(c, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.f0 = float(f0)
        if np.any(self.a < 0):
            raise ValueError("quadratic coefficients must be nonnegative for convexity")
        if self.B.shape != (self.c.shape[0], self.a.shape[0]):
            raise ValueError("constraint matrix shape does not match (N, d)")
        a_, b_, c_, B_, f0_ = self.a, self.b, self.c, self.B, self.f0
        super().__init__(
            f=lambda x: float(np.dot(a_ * x + b_, x) + f0_),
            grad_f=lambda x: 2.0 * a_ * x + b_,
            g=lambda x: c_ + B_ @ x,
            jac_g=lambda x: B_,
            dim=a_.shape[0], n_constraints=c_.shape[0], mode=mode, budget=budget,
        )

    def oracle(self) -> "QuadraticSlot":
        return QuadraticSlot(self.a, self.b, self.c, self.B, self.f0)
