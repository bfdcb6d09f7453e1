"""Exogenous demand generators (i.i.d., Markov and oblivious adversarial)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from ..core import RngStream

KINDS = ("iid-uniform", "markov-ar1", "adversarial-switch", "adversarial-ramp")


@dataclass
class DemandProcess:
    """Nonnegative vector process bounded by ``high``.

    kinds:
      * ``iid-uniform``: independent ``U[low, high]`` draws.
      * ``markov-ar1``: ``d_{t+1} = rho d_t + (1 - rho) xi_t`` with i.i.d. uniform ``xi``,
        started at the midpoint.
      * ``adversarial-switch``: alternates between ``low`` and ``high`` every ``period`` slots.
      * ``adversarial-ramp``: sawtooth rising from ``low`` to ``high`` at ``slope`` per slot.

    The adversarial kinds are oblivious; only their phase depends on the seed.
    """

    kind: str
    low: np.ndarray
    high: np.ndarray
    rng: RngStream
    rho: float = 0.0
    period: int = 100
    slope: float = 0.01
    t: int = field(default=0, init=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown demand kind {self.kind!r}; expected one of {KINDS}")
        self.low = np.atleast_1d(np.asarray(self.low, dtype=float))
        self.high = np.atleast_1d(np.asarray(self.high, dtype=float))
        if self.low.shape != self.high.shape:
            raise ValueError("low and high must have equal shape")
        if np.any(self.low < 0) or np.any(self.low > self.high):
            raise ValueError("demand ranges need 0 <= low <= high")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("AR coefficient must lie in [0, 1)")
        if self.period < 1 or self.slope <= 0:
            raise ValueError("period must be >= 1 and slope > 0")
        self._state = 0.5 * (self.low + self.high)
        # Oblivious adversaries: the phase is drawn once, before any slot is played.
        self._phase = 0.0
        if self.kind.startswith("adversarial"):
            self._phase = float(self.rng.random())

    @property
    def d_max(self) -> np.ndarray:
        return self.high

    @property
    def dim(self) -> int:
        return self.low.shape[0]

    def _deterministic(self, ts: np.ndarray) -> np.ndarray:
        span = self.high - self.low
        if self.kind == "adversarial-switch":
            offset = int(self._phase * 2 * self.period)
            level = ((ts + offset) // self.period) % 2
            return self.low + span * level[:, None]
        frac = np.mod(self._phase + self.slope * ts, 1.0)
        return self.low + span * frac[:, None]

    def next(self) -> np.ndarray:
        return self.sample(1)[0]

    def sample(self, n: int) -> np.ndarray:
        """Advance ``n`` slots at once; identical to ``n`` calls of :meth:`next`."""
        ts = np.arange(self.t, self.t + n)
        self.t += n
        if self.kind.startswith("adversarial"):
            return self._deterministic(ts)
        xi = self.rng.uniform(self.low, self.high, size=(n, self.dim))
        if self.kind == "iid-uniform":
            return xi
        rho = self.rho
        out, zf = lfilter([1.0 - rho], [1.0, -rho], xi, axis=0, zi=(rho * self._state)[None, :])
        self._state = out[-1].copy()
        return out


def demand_next(proc: DemandProcess) -> np.ndarray:
    return proc.next()
