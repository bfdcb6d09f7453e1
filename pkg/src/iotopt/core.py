"""Shared numeric primitives: boxes, projections, shrinkage and seeded randomness."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# A decision is a plain float vector; helpers below validate shape and finiteness.
Decision = np.ndarray


class DimensionError(ValueError):
    """Raised when vector and set dimensions disagree."""


def as_decision(values, d: int | None = None) -> Decision:
    x = np.asarray(values, dtype=float)
    if x.ndim != 1:
        raise DimensionError(f"decision must be 1-D, got shape {x.shape}")
    if d is not None and x.shape[0] != d:
        raise DimensionError(f"decision has length {x.shape[0]}, expected {d}")
    if not np.all(np.isfinite(x)):
        raise ValueError("decision has non-finite entries")
    return x


@dataclass(frozen=True)
class BoxSet:
    """Axis-aligned box ``{x : lower <= x <= upper}``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionError("lower and upper must be 1-D with equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box bounds must be finite")
        if np.any(lo > hi):
            raise ValueError("box requires lower <= upper")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def inradius(self) -> float:
        """Radius of the largest Euclidean ball inside the box."""
        return 0.5 * float(np.min(self.upper - self.lower))

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def subset_of(self, other: "BoxSet", tol: float = 0.0) -> bool:
        return bool(np.all(self.lower >= other.lower - tol) and np.all(self.upper <= other.upper + tol))

    @classmethod
    def uniform(cls, d: int, lower: float, upper: float) -> "BoxSet":
        return cls(np.full(d, float(lower)), np.full(d, float(upper)))


@dataclass(frozen=True)
class ShrunkSet:
    """The box ``base`` scaled by ``1 - gamma`` about its center."""

    base: BoxSet
    gamma: float

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")

    @property
    def box(self) -> BoxSet:
        if self.gamma == 0.0:
            return self.base
        c = self.base.center
        half = 0.5 * (1.0 - self.gamma) * (self.base.upper - self.base.lower)
        return BoxSet(c - half, c + half)

    @property
    def margin(self) -> float:
        """Largest perturbation radius that keeps shrunk points inside the base box."""
        return self.gamma * self.base.inradius


def project_box(x, box: BoxSet) -> Decision:
    """Euclidean projection onto ``box`` (coordinate-wise clamp).

    Works on stacked inputs too: the trailing axis must have length ``box.dim``.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (box.dim,):
        raise DimensionError(f"point of shape {x.shape} does not match box of dim {box.dim}")
    return np.minimum(np.maximum(x, box.lower), box.upper)


def shrink_box(box: BoxSet, gamma: float) -> ShrunkSet:
    return ShrunkSet(box, float(gamma))


@dataclass
class RngStream:
    """Seeded random stream keyed by ``(seed, stream_id)``.

    Stream ids separate the purposes that draw randomness (demand, coefficient
    jitter, perturbation directions, exploration) so that each is reproducible
    on its own.
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")
        self.generator = np.random.default_rng([int(self.seed), int(self.stream_id)])

    def __getattr__(self, name):
        # Delegate draws (random, normal, uniform, integers, ...) to the generator.
        if name == "generator":
            raise AttributeError(name)
        return getattr(self.generator, name)

    def spawn(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError("rng must be an RngStream or numpy Generator")


def sample_unit_sphere(d: int, rng, size: int | tuple | None = None) -> np.ndarray:
    """Uniform draw(s) from the unit sphere in R^d via normalized Gaussians.

    With ``size`` given, returns an array of shape ``size + (d,)``.
    """
    if d < 1:
        raise ValueError("sphere dimension must be >= 1")
    gen = _generator(rng)
    shape = (d,) if size is None else tuple(np.atleast_1d(size)) + (d,)
    z = gen.standard_normal(shape)
    norm = np.linalg.norm(z, axis=-1, keepdims=True)
    # A zero Gaussian vector has probability zero; guard anyway.
    while np.any(norm == 0):
        bad = (norm == 0)[..., 0]
        z[bad] = gen.standard_normal((int(bad.sum()), d))
        norm = np.linalg.norm(z, axis=-1, keepdims=True)
    return z / norm
