"""Fog offloading environment: edge, fog and cloud service of time-varying demand.

Stacked decision layout (length ``|edges| + 2N``)::

    [ x^{nm} for each directed edge | chi^n cloud offloads | x^{nn} local amounts ]

Slot constraint (one row per node): ``g^n = d^n + inflow - outflow - chi^n - x^{nn}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import BoxSet, RngStream
from .demand import DemandProcess
from .slots import FeedbackMode, QuadraticSlot


@dataclass(frozen=True)
class FogNetwork:
    n_nodes: int
    edges: tuple
    caps: BoxSet
    a: np.ndarray  # quadratic delay coefficient per stacked coordinate
    b: np.ndarray  # linear delay coefficient per stacked coordinate
    jitter: float = 0.2

    def __post_init__(self):
        edges = tuple((int(n), int(m)) for n, m in self.edges)
        for n, m in edges:
            if not (0 <= n < self.n_nodes and 0 <= m < self.n_nodes) or n == m:
                raise ValueError(f"invalid edge {(n, m)}")
        object.__setattr__(self, "edges", edges)
        d = len(edges) + 2 * self.n_nodes
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.shape != (d,) or b.shape != (d,) or self.caps.dim != d:
            raise ValueError(f"coefficients and caps must have length {d}")
        if np.any(a < 0):
            raise ValueError("delay coefficients a must be nonnegative")
        if np.any(self.caps.lower < 0):
            raise ValueError("caps must be nonnegative")
        if not 0 <= self.jitter < 1:
            raise ValueError("jitter must lie in [0, 1)")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def dim(self) -> int:
        return self.n_edges + 2 * self.n_nodes

    def out_edges(self, n: int) -> list[int]:
        return [e for e, (src, _) in enumerate(self.edges) if src == n]

    def in_edges(self, n: int) -> list[int]:
        return [e for e, (_, dst) in enumerate(self.edges) if dst == n]

    def cloud_index(self, n: int) -> int:
        return self.n_edges + n

    def local_index(self, n: int) -> int:
        return self.n_edges + self.n_nodes + n

    @property
    def incidence(self) -> np.ndarray:
        """Matrix ``B`` with ``g = d + B x``."""
        B = np.zeros((self.n_nodes, self.dim))
        for e, (n, m) in enumerate(self.edges):
            B[n, e] -= 1.0
            B[m, e] += 1.0
        for n in range(self.n_nodes):
            B[n, self.cloud_index(n)] = -1.0
            B[n, self.local_index(n)] = -1.0
        return B


def default_fog_network(n_nodes: int = 3, jitter: float = 0.2) -> FogNetwork:
    """Line topology ``0 -> 1 -> ... -> N-1``; d = 3N - 1 (8 for three nodes)."""
    edges = tuple((n, n + 1) for n in range(n_nodes - 1))
    E, N = len(edges), n_nodes
    a = np.r_[np.full(E, 0.5), np.full(N, 0.2), np.full(N, 1.0)]
    b = np.r_[np.full(E, 0.5), np.full(N, 1.0), np.full(N, 0.1)]
    cap = np.r_[np.full(E, 1.0), np.full(N, 2.0), np.full(N, 1.5)]
    return FogNetwork(n_nodes, edges, BoxSet(np.zeros(E + 2 * N), cap), a, b, jitter)


def default_demand_range(n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    # Per-node means cycle through 1.5, 1.0, 0.8; draws span +-50% of the mean.
    means = np.resize(np.array([1.5, 1.0, 0.8]), n_nodes)
    return 0.5 * means, 1.5 * means


def fog_slot(net: FogNetwork, demands, coeff_draw=None, mode=FeedbackMode.FULL,
             budget=None) -> QuadraticSlot:
    """Slot functions for one demand vector.

    ``coeff_draw`` supplies the per-slot coefficient multipliers: an
    :class:`RngStream` (uniform jitter drawn now), an explicit multiplier
    vector, or ``None`` for nominal coefficients.
    """
    demands = np.asarray(demands, dtype=float)
    if demands.shape != (net.n_nodes,):
        raise ValueError(f"expected {net.n_nodes} demands, got shape {demands.shape}")
    if np.any(demands < 0):
        raise ValueError("demands must be nonnegative")
    if coeff_draw is None:
        mult = np.ones(net.dim)
    elif isinstance(coeff_draw, (RngStream, np.random.Generator)):
        mult = coeff_draw.uniform(1 - net.jitter, 1 + net.jitter, size=net.dim)
    else:
        mult = np.asarray(coeff_draw, dtype=float)
        if mult.shape != (net.dim,):
            raise ValueError("coefficient multipliers must have length d")
    return QuadraticSlot(net.a * mult, net.b * mult, demands, net.incidence, mode=mode, budget=budget)


@dataclass
class FogInstance:
    """A realized fog problem sequence: demands and coefficient multipliers per slot."""

    net: FogNetwork
    demands: np.ndarray  # (T, N)
    multipliers: np.ndarray  # (T, d)
    mode: FeedbackMode = FeedbackMode.FULL
    budget: int | None = None
    _B: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.mode = FeedbackMode.parse(self.mode)
        self._B = self.net.incidence

    @property
    def horizon(self) -> int:
        return self.demands.shape[0]

    @property
    def box(self) -> BoxSet:
        return self.net.caps

    @property
    def incidence(self) -> np.ndarray:
        return self._B

    @property
    def a(self) -> np.ndarray:
        return self.net.a * self.multipliers

    @property
    def b(self) -> np.ndarray:
        return self.net.b * self.multipliers

    def slot(self, t: int) -> QuadraticSlot:
        return QuadraticSlot(self.net.a * self.multipliers[t], self.net.b * self.multipliers[t],
                             self.demands[t], self._B, mode=self.mode, budget=self.budget)

    def prefix(self, T: int) -> "FogInstance":
        return FogInstance(self.net, self.demands[:T], self.multipliers[:T], self.mode, self.budget)


def make_fog_instance(net: FogNetwork, horizon: int, seed: int, kind: str = "markov-ar1",
                      rho: float = 0.99, low=None, high=None, period: int = 500,
                      slope: float = 1e-3, mode=FeedbackMode.FULL, budget=None) -> FogInstance:
    """Draw demands (stream 1) and coefficient multipliers (stream 2) for ``horizon`` slots.

    Both streams are prefix-consistent: the first ``T`` slots do not depend on ``horizon``.
    The coefficients follow the same regime as the demands.
    """
    if low is None or high is None:
        low, high = default_demand_range(net.n_nodes)
    demand = DemandProcess(kind, low, high, RngStream(seed, 1), rho=rho, period=period, slope=slope)
    j = net.jitter
    coeff = DemandProcess(kind, np.full(net.dim, 1 - j), np.full(net.dim, 1 + j), RngStream(seed, 2),
                          rho=rho, period=period, slope=slope)
    return FogInstance(net, demand.sample(horizon), coeff.sample(horizon), mode, budget)
