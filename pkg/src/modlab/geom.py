"""Points of the extended space, spheres, balls, annuli and the chordal metric.

Finite points are plain 1-D float arrays; the point at infinity is the
``INFINITY`` singleton.  Region objects used to describe curve endpoints and
domains expose ``distance(points)`` and/or ``contains(points)`` over arrays of
shape ``(k, n)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ContractViolation


class _PointAtInfinity:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INFINITY"

    def __reduce__(self):
        return (_PointAtInfinity, ())


INFINITY = _PointAtInfinity()

ExtPoint = Union[np.ndarray, Sequence[float], _PointAtInfinity]


def is_infinite(x) -> bool:
    return x is INFINITY


def as_point(x, n: int | None = None) -> np.ndarray:
    """Return a finite point as a float array, validating its dimension."""
    if x is INFINITY:
        raise ContractViolation("expected a finite point, got INFINITY")
    arr = np.asarray(x, dtype=float).reshape(-1)
    if arr.size < 2:
        raise ContractViolation(f"points live in R^n with n >= 2, got {arr.size} coordinates")
    if not np.all(np.isfinite(arr)):
        raise ContractViolation("finite points must have finite coordinates")
    if n is not None and arr.size != n:
        raise ContractViolation(f"dimension mismatch: expected {n}, got {arr.size}")
    return arr


def chordal_distance(x: ExtPoint, y: ExtPoint) -> float:
    """Chordal distance on the sphere of diameter 1 (bounded by 1)."""
    if x is INFINITY and y is INFINITY:
        return 0.0
    if x is INFINITY:
        x, y = y, x
    if y is INFINITY:
        px = as_point(x)
        return float(1.0 / np.sqrt(1.0 + px @ px))
    px = as_point(x)
    py = as_point(y, px.size)
    num = np.linalg.norm(px - py)
    return float(num / (np.sqrt(1.0 + px @ px) * np.sqrt(1.0 + py @ py)))


def chordal_distances(xs: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Vectorized chordal distance from each row of ``xs`` to a finite ``y``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    y = np.asarray(y, dtype=float)
    if xs.shape[1] != y.size:
        raise ContractViolation("dimension mismatch")
    num = np.linalg.norm(xs - y, axis=1)
    return num / (np.sqrt(1.0 + np.einsum("ij,ij->i", xs, xs)) * np.sqrt(1.0 + y @ y))


def hausdorff_chordal_diameter(points: Iterable[ExtPoint]) -> float:
    """Chordal diameter: the largest pairwise chordal distance in the set."""
    pts = list(points)
    if not pts:
        raise ContractViolation("diameter of an empty set is undefined")
    best = 0.0
    for a, b in itertools.combinations(pts, 2):
        best = max(best, chordal_distance(a, b))
    return best


def _center(c) -> tuple[float, ...]:
    return tuple(float(v) for v in as_point(c))


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _center(self.center))
        if not self.radius > 0:
            raise ContractViolation("sphere radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def distance(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.abs(np.linalg.norm(pts - np.asarray(self.center), axis=1) - self.radius)


@dataclass(frozen=True)
class Ball:
    """Ball B(center, radius); open for ``contains``, closed for ``distance``."""

    center: tuple[float, ...]
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _center(self.center))
        if not self.radius > 0:
            raise ContractViolation("ball radius must be positive")

    @property
    def dim(self) -> int:
        return len(self.center)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.linalg.norm(pts - np.asarray(self.center), axis=1) < self.radius

    def distance(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        d = np.linalg.norm(pts - np.asarray(self.center), axis=1) - self.radius
        return np.maximum(d, 0.0)


@dataclass(frozen=True)
class Annulus:
    """The open ring r1 < |y - center| < r2."""

    center: tuple[float, ...]
    r1: float
    r2: float

    def __post_init__(self):
        object.__setattr__(self, "center", _center(self.center))
        if not (0 < self.r1 < self.r2 < np.inf):
            raise ContractViolation(f"annulus needs 0 < r1 < r2 < inf, got r1={self.r1}, r2={self.r2}")

    @property
    def dim(self) -> int:
        return len(self.center)

    @property
    def inner(self) -> Sphere:
        return Sphere(self.center, self.r1)

    @property
    def outer(self) -> Sphere:
        return Sphere(self.center, self.r2)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        r = np.linalg.norm(pts - np.asarray(self.center), axis=1)
        return (r > self.r1) & (r < self.r2)


def annulus_contains(a: Annulus, x: ExtPoint) -> bool:
    if x is INFINITY:
        return False
    px = as_point(x, a.dim)
    return bool(a.contains(px[None, :])[0])


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; closed for ``distance`` (may be degenerate, e.g. a side)."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or any(a > b for a, b in zip(lo, hi)):
            raise ContractViolation("box corners must satisfy lo <= hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return len(self.lo)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all((pts > np.asarray(self.lo)) & (pts < np.asarray(self.hi)), axis=1)

    def distance(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        clipped = np.clip(pts, self.lo, self.hi)
        return np.linalg.norm(pts - clipped, axis=1)


@dataclass(frozen=True)
class PointSet:
    points: tuple[tuple[float, ...], ...] = field(default=())

    def __post_init__(self):
        pts = tuple(_center(p) for p in self.points)
        if not pts:
            raise ContractViolation("point set must be nonempty")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return len(self.points[0])

    def distance(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        own = np.asarray(self.points)
        d = np.linalg.norm(pts[:, None, :] - own[None, :, :], axis=2)
        return d.min(axis=1)


@dataclass(frozen=True)
class Union_:
    """Union of open regions (for domains)."""

    parts: tuple

    @property
    def dim(self) -> int:
        return self.parts[0].dim

    def contains(self, points: np.ndarray) -> np.ndarray:
        out = np.zeros(len(np.atleast_2d(points)), dtype=bool)
        for part in self.parts:
            out |= part.contains(points)
        return out


def regions_intersect(a, b, tol: float = 1e-12) -> bool:
    """Decide whether two closed terminal sets share a point."""
    if isinstance(a, Sphere) and isinstance(b, Sphere):
        d = float(np.linalg.norm(np.subtract(a.center, b.center)))
        if d <= tol:
            return abs(a.radius - b.radius) <= tol
        return abs(a.radius - b.radius) - tol <= d <= a.radius + b.radius + tol
    if isinstance(a, Box) and isinstance(b, Box):
        return all(max(l1, l2) <= min(h1, h2) + tol for l1, h1, l2, h2 in zip(a.lo, a.hi, b.lo, b.hi))
    if isinstance(a, Ball) and isinstance(b, Ball):
        d = float(np.linalg.norm(np.subtract(a.center, b.center)))
        return d <= a.radius + b.radius + tol
    for u, v in ((a, b), (b, a)):
        if isinstance(u, PointSet):
            return bool(np.min(v.distance(np.asarray(u.points))) <= tol)
    if isinstance(b, Sphere):
        a, b = b, a
    if isinstance(a, Sphere):
        # sphere against ball/box: sample the sphere densely
        samples = sphere_directions(a.dim, 4096) * a.radius + np.asarray(a.center)
        return bool(np.min(b.distance(samples)) <= max(tol, 1e-3 * a.radius))
    raise ContractViolation(f"cannot decide intersection of {type(a).__name__} and {type(b).__name__}")


def sphere_directions(n: int, count: int) -> np.ndarray:
    """Deterministic, roughly equidistributed unit vectors in R^n."""
    if count < 1:
        raise ContractViolation("need at least one direction")
    if n == 2:
        t = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if n == 3:
        # Fibonacci lattice; the first vector is pinned to e1 so count=1 is (1,0,0).
        if count == 1:
            return np.array([[1.0, 0.0, 0.0]])
        k = np.arange(count) + 0.5
        z = 1 - 2 * k / count
        phi = np.pi * (1 + 5**0.5) * k
        r = np.sqrt(1 - z * z)
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    rng = np.random.default_rng(12345)
    v = rng.standard_normal((count, n))
    v[0] = np.eye(n)[0]
    return v / np.linalg.norm(v, axis=1, keepdims=True)
