"""Semi-interactive queueing network ``q_{t+1} = [q_t + A x_t + c_t]^+``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import BoxSet, RngStream
from .demand import DemandProcess


@dataclass
class QueueState:
    q: np.ndarray

    def __post_init__(self):
        self.q = np.atleast_1d(np.asarray(self.q, dtype=float))
        if np.any(self.q < 0) or not np.all(np.isfinite(self.q)):
            raise ValueError("queue lengths must be finite and nonnegative")


def check_incidence(A) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not np.all(np.isin(A, (-1.0, 0.0, 1.0))):
        raise ValueError("incidence entries must be -1, 0 or +1")
    if not (np.all((A == 1).sum(0) == 1) and np.all((A == -1).sum(0) == 1)):
        raise ValueError("each incidence column needs exactly one +1 and one -1")
    return A


@dataclass
class QueueNetwork:
    """Nodes buffer workload; edges route it.

    Exogenous input per slot is ``c_t = d_t - service`` where ``d_t`` comes from
    the arrival process and ``service`` is a fixed drain (nonzero only at nodes
    that deliver work out of the network, e.g. a data center).

    Edge costs ``a x^2 + b x`` with ``x`` in ``caps`` define the operator's
    per-slot objective.
    """

    incidence: np.ndarray
    arrivals: DemandProcess
    service: np.ndarray
    caps: BoxSet
    edge_a: np.ndarray
    edge_b: np.ndarray
    queues: QueueState = None

    def __post_init__(self):
        self.incidence = check_incidence(self.incidence)
        N, E = self.incidence.shape
        self.service = np.asarray(self.service, dtype=float)
        self.edge_a = np.asarray(self.edge_a, dtype=float)
        self.edge_b = np.asarray(self.edge_b, dtype=float)
        if self.service.shape != (N,) or self.arrivals.dim != N:
            raise ValueError("service and arrivals must have one entry per node")
        if self.caps.dim != E or self.edge_a.shape != (E,) or self.edge_b.shape != (E,):
            raise ValueError("edge data must have one entry per edge")
        if self.queues is None:
            self.queues = QueueState(np.zeros(N))

    @property
    def n_nodes(self) -> int:
        return self.incidence.shape[0]

    @property
    def n_edges(self) -> int:
        return self.incidence.shape[1]

    def exogenous(self, n: int) -> np.ndarray:
        return self.arrivals.sample(n) - self.service

    def draw_exogenous(self, n: int, seed: int, stream: int = 21) -> np.ndarray:
        """``n`` slots of ``c_t`` from a fresh copy of the arrival process."""
        a = self.arrivals
        proc = DemandProcess(a.kind, a.low, a.high, RngStream(seed, stream), rho=a.rho,
                             period=a.period, slope=a.slope)
        return proc.sample(n) - self.service


def queue_step(net: QueueNetwork, x, c) -> QueueState:
    x = np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    if x.shape != (net.n_edges,) or c.shape != (net.n_nodes,):
        raise ValueError("dimension mismatch in queue update")
    net.queues = QueueState(np.maximum(net.queues.q + net.incidence @ x + c, 0.0))
    return net.queues


def default_queue_network(seed: int = 0, rate_scale: float = 1.0) -> QueueNetwork:
    """Four nodes: two sources, one relay, one sink with spare service capacity.

    Edges: 0->2, 1->2, 2->3, 0->3, 1->3.
    """
    edges = [(0, 2), (1, 2), (2, 3), (0, 3), (1, 3)]
    A = np.zeros((4, len(edges)))
    for e, (n, m) in enumerate(edges):
        A[n, e] = -1.0
        A[m, e] = 1.0
    mean = rate_scale * np.array([1.0, 0.8, 0.2, 0.0])
    spread = rate_scale * np.array([0.5, 0.4, 0.2, 0.0])
    arrivals = DemandProcess("iid-uniform", mean - spread, mean + spread, RngStream(seed, 21))
    return QueueNetwork(
        incidence=A,
        arrivals=arrivals,
        service=np.array([0.0, 0.0, 0.0, 4.0]),
        caps=BoxSet(np.zeros(len(edges)), np.full(len(edges), 3.0)),
        edge_a=np.array([0.6, 0.8, 0.5, 1.2, 1.0]),
        edge_b=np.array([0.2, 0.3, 0.1, 0.4, 0.5]),
    )
