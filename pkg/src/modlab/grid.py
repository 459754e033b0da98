"""Uniform cell grids over an axis-aligned bounding box."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ContractViolation

_SNAP = 1e-9


@dataclass(frozen=True)
class Grid:
    lo: tuple[float, ...]
    hi: tuple[float, ...]
    shape: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        shape = tuple(int(s) for s in self.shape)
        if not (len(lo) == len(hi) == len(shape)) or len(lo) < 2:
            raise ContractViolation("grid corners and shape must agree in dimension n >= 2")
        if any(s < 1 for s in shape) or any(a >= b for a, b in zip(lo, hi)):
            raise ContractViolation("grid needs positive cell counts and lo < hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "shape", shape)

    @classmethod
    def square(cls, half_width: float, cells: int, n: int = 2, center=None) -> "Grid":
        c = np.zeros(n) if center is None else np.asarray(center, dtype=float)
        return cls(tuple(c - half_width), tuple(c + half_width), (cells,) * n)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @cached_property
    def side(self) -> np.ndarray:
        return (np.asarray(self.hi) - np.asarray(self.lo)) / np.asarray(self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.side))

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell centers, shape (size, n), in row-major cell order."""
        axes = [self.lo[i] + self.side[i] * (np.arange(self.shape[i]) + 0.5) for i in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def describe(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi), "shape": list(self.shape)}

    def contains_points(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        pts = np.atleast_2d(points)
        scale = tol * max(1.0, float(np.max(np.abs(self.lo + self.hi))))
        return np.all((pts >= np.asarray(self.lo) - scale) & (pts <= np.asarray(self.hi) + scale), axis=1)

    def cell_coords(self, points: np.ndarray) -> np.ndarray:
        """Integer cell coordinates; a point on a shared face goes to the higher cell."""
        pts = np.atleast_2d(points)
        u = (pts - np.asarray(self.lo)) / self.side
        r = np.rint(u)
        u = np.where(np.abs(u - r) < _SNAP, r, u)
        idx = np.floor(u).astype(np.int64)
        return np.clip(idx, 0, np.asarray(self.shape) - 1)

    def flat_index(self, coords: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(tuple(np.atleast_2d(coords).T), self.shape)

    def coarsen(self) -> "Grid":
        if any(s % 2 for s in self.shape):
            raise ContractViolation("coarsening needs even cell counts")
        return Grid(self.lo, self.hi, tuple(s // 2 for s in self.shape))
