"""Discrete arm sets with time-varying availability."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

import numpy as np

from ..core import RngStream
from .fog import FogInstance, FogNetwork


MASK_CHUNK = 1024


def availability_masks(K: int, T: int, rate, seed: int, kind: str = "iid", period: int = 50,
                       stream: int = 31) -> np.ndarray:
    """Per-slot availability, shape ``(T, K)``; every row has at least one arm.

    ``iid``: independent Bernoulli(rate) per arm, rows resampled until nonempty.
    Rows are drawn in fixed chunks with one generator per chunk, so the first
    ``T`` rows do not depend on the requested horizon.
    ``adversarial``: arm ``k`` is blocked during every other window of ``period``
    slots, with window offsets fixed by the seed; arm 0 is never blocked.
    """
    rate = np.broadcast_to(np.asarray(rate, dtype=float), (K,))
    if kind == "iid":
        if not np.any(rate > 0):
            raise ValueError("at least one arm needs a positive availability rate")
        blocks = []
        for c in range(-(-T // MASK_CHUNK)):
            gen = np.random.default_rng([int(seed), stream, c])
            mask = gen.random((MASK_CHUNK, K)) < rate
            empty = ~mask.any(1)
            while empty.any():
                mask[empty] = gen.random((int(empty.sum()), K)) < rate
                empty = ~mask.any(1)
            blocks.append(mask)
        return np.concatenate(blocks)[:T] if blocks else np.zeros((0, K), dtype=bool)
    if kind == "adversarial":
        offsets = RngStream(seed, stream).integers(0, 2 * period, size=K)
        ts = np.arange(T)[:, None]
        mask = ((ts + offsets[None, :]) // period) % 2 == 0
        mask[:, 0] = True
        return mask
    raise ValueError(f"unknown availability kind {kind!r}")


@dataclass
class ArmSet:
    arms: np.ndarray  # (K, d) grid of configurations
    availability: np.ndarray  # (T, K) boolean

    def __post_init__(self):
        self.arms = np.atleast_2d(np.asarray(self.arms, dtype=float))
        self.availability = np.asarray(self.availability, dtype=bool)
        if self.arms.shape[0] < 1:
            raise ValueError("need at least one arm")
        if self.availability.ndim != 2 or self.availability.shape[1] != self.arms.shape[0]:
            raise ValueError("availability must have shape (T, K)")
        if not np.all(self.availability.any(1)):
            raise ValueError("every slot needs at least one available arm")

    @property
    def K(self) -> int:
        return self.arms.shape[0]


@dataclass
class ArmInstance:
    """Realized per-slot arm values: loss ``F[t, k]`` and constraints ``G[t, k, :]``.

    Algorithms only ever see the entries of the arm they play.
    """

    arm_set: ArmSet
    F: np.ndarray
    G: np.ndarray

    @property
    def horizon(self) -> int:
        return self.F.shape[0]

    @property
    def g_max(self) -> float:
        return float(np.max(np.abs(self.G)))

    def prefix(self, T: int) -> "ArmInstance":
        return ArmInstance(ArmSet(self.arm_set.arms, self.arm_set.availability[:T]), self.F[:T], self.G[:T])


DEFAULT_FBAR = (0.2, 0.35, 0.5, 0.65, 0.8)
DEFAULT_GBAR = (0.4, 0.15, -0.1, -0.3, -0.5)


def stationary_arm_instance(T: int, seed: int, fbar=DEFAULT_FBAR, gbar=DEFAULT_GBAR,
                            noise: float = 0.1, rate=0.8, availability: str = "iid") -> ArmInstance:
    """Stationary arms with uniform noise of half-width ``noise`` around the means.

    Cheaper arms violate the single constraint on average, so the best fixed
    feasible distribution mixes arms. Streams: 31 masks, 32 losses, 33 constraints.
    """
    fbar = np.asarray(fbar, dtype=float)
    gbar = np.asarray(gbar, dtype=float).reshape(len(fbar), -1)
    K, N = gbar.shape
    masks = availability_masks(K, T, rate, seed, availability)
    F = fbar + RngStream(seed, 32).uniform(-noise, noise, size=(T, K))
    G = gbar + RngStream(seed, 33).uniform(-noise, noise, size=(T, K, N))
    arms = np.linspace(0.0, 1.0, K)[:, None]
    return ArmInstance(ArmSet(arms, masks), F, G)


def fog_arm_grid(net: FogNetwork, resolution: int) -> np.ndarray:
    """Uniform grid over the fog box with ``resolution`` levels per coordinate."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    levels = [np.linspace(lo, hi, resolution) for lo, hi in zip(net.caps.lower, net.caps.upper)]
    return np.array(list(product(*levels)))


def fog_arm_instance(inst: FogInstance, arms: np.ndarray, threshold: float, rate=1.0,
                     seed: int = 0, availability: str = "iid") -> ArmInstance:
    """Indicator-delay objective on a discretized fog box.

    The loss of arm ``k`` is 1 when its aggregate delay exceeds ``threshold``
    and 0 otherwise; constraints are the usual node balances.
    """
    arms = np.atleast_2d(arms)
    delay = inst.a @ (arms ** 2).T + inst.b @ arms.T  # (T, K)
    F = (delay > threshold).astype(float)
    G = inst.demands[:, None, :] + arms @ inst.incidence.T
    masks = availability_masks(arms.shape[0], inst.horizon, rate, seed, availability)
    return ArmInstance(ArmSet(arms, masks), F, G)
