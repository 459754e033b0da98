"""Polylines, finite curve families, family generators and lifting.

Curves are stored as vertex arrays.  ``curve_cell_incidence`` performs exact
segment/cell clipping, so the discrete line integral of a cellwise-constant
density is exact for the polyline itself.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Iterable, TextIO

import numpy as np

from .errors import BranchPointError, ContractViolation
from .geom import Annulus, Ball, Box, PointSet, Sphere, Union_, regions_intersect, sphere_directions
from .grid import Grid

if TYPE_CHECKING:
    from .mapzoo import MapFamily


@dataclass(frozen=True, eq=False)
class Polyline:
    vertices: np.ndarray
    step: float = math.inf

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
            raise ContractViolation("a polyline needs at least two vertices in R^n, n >= 2")
        if not np.all(np.isfinite(v)):
            raise ContractViolation("polyline vertices must be finite")
        seg = np.linalg.norm(np.diff(v, axis=0), axis=1)
        if np.any(seg == 0):
            raise ContractViolation("consecutive polyline vertices must be distinct")
        if seg.max() > self.step * (1 + 1e-9):
            raise ContractViolation(f"vertex spacing {seg.max():.3g} exceeds declared step {self.step:.3g}")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.vertices, axis=0), axis=1).sum())

    def resample(self, step: float) -> "Polyline":
        """Insert vertices so no segment is longer than ``step``; original vertices are kept."""
        if not step > 0:
            raise ContractViolation("resampling step must be positive")
        out = [self.vertices[:1]]
        for a, b in zip(self.vertices[:-1], self.vertices[1:]):
            k = max(1, int(math.ceil(np.linalg.norm(b - a) / step - 1e-12)))
            t = (np.arange(1, k + 1) / k)[:, None]
            out.append(a + t * (b - a))
        return Polyline(np.vstack(out), step)


@dataclass
class CurveFamily:
    curves: list[Polyline]
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.curves and not self.meta.get("empty"):
            raise ContractViolation("an empty family must be tagged meta['empty']=True")
        dims = {c.dim for c in self.curves}
        if len(dims) > 1:
            raise ContractViolation("all curves of a family must share the dimension")

    def __len__(self) -> int:
        return len(self.curves)

    def __iter__(self):
        return iter(self.curves)

    @property
    def dim(self) -> int | None:
        return self.curves[0].dim if self.curves else None

    def subset(self, indices: Iterable[int]) -> "CurveFamily":
        picked = [self.curves[i] for i in indices]
        return CurveFamily(picked, {**self.meta, "empty": not picked, "subset_of": self.meta.get("generator")})

    def __or__(self, other: "CurveFamily") -> "CurveFamily":
        curves = self.curves + other.curves
        return CurveFamily(curves, {"generator": "union", "empty": not curves})

    def dump(self, fh: TextIO) -> None:
        """Write one curve per line: vertices separated by spaces, coordinates by commas."""
        fh.write("# " + json.dumps(_jsonable(self.meta), sort_keys=True) + "\n")
        for c in self.curves:
            fh.write(" ".join(",".join(repr(float(x)) for x in v) for v in c.vertices) + "\n")

    @classmethod
    def load(cls, fh: TextIO) -> "CurveFamily":
        meta: dict[str, Any] = {}
        curves = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                meta = json.loads(line[1:])
                continue
            verts = [[float(x) for x in tok.split(",")] for tok in line.split()]
            curves.append(Polyline(np.asarray(verts)))
        meta["empty"] = not curves
        return cls(curves, meta)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def radial_family(a: Annulus, count: int, step: float = math.inf, directions: np.ndarray | None = None) -> CurveFamily:
    """Radial segments from S(center, r1) to S(center, r2) along equidistributed directions."""
    if count < 1:
        raise ContractViolation("count must be >= 1")
    dirs = sphere_directions(a.dim, count) if directions is None else np.asarray(directions, dtype=float)
    c = np.asarray(a.center)
    k = 1 if not math.isfinite(step) else max(1, int(math.ceil((a.r2 - a.r1) / step - 1e-12)))
    t = a.r1 + (a.r2 - a.r1) * np.arange(k + 1) / k
    curves = [Polyline(c + t[:, None] * u[None, :], step) for u in dirs]
    meta = {"generator": "radial", "center": list(a.center), "r1": a.r1, "r2": a.r2, "count": count}
    return CurveFamily(curves, meta)


@dataclass(frozen=True)
class ConnectingSpec:
    """Descriptor of the family of all grid curves joining E to F inside a domain."""

    E: Any
    F: Any
    domain: Any

    @property
    def dim(self) -> int:
        return self.E.dim


_TERMINALS = (Sphere, Ball, Box, PointSet)


def connecting_family_spec(E, F, domain) -> ConnectingSpec:
    """Validate terminal sets and domain for the connecting-mode solver."""
    for t in (E, F):
        if not isinstance(t, _TERMINALS):
            raise ContractViolation(f"unsupported terminal set {type(t).__name__}")
    if not (isinstance(domain, (Annulus, Ball, Box, Union_)) or isinstance(domain, np.ndarray)):
        raise ContractViolation(f"unsupported domain descriptor {type(domain).__name__}")
    if E.dim != F.dim or (not isinstance(domain, np.ndarray) and domain.dim != E.dim):
        raise ContractViolation("E, F and the domain must share the dimension")
    if regions_intersect(E, F):
        raise ContractViolation("E and F must be disjoint")
    return ConnectingSpec(E, F, domain)


def lift_family(fam: CurveFamily, fmap: "MapFamily") -> CurveFamily:
    """Lift each image curve through every branch inverse of ``fmap``.

    Output order: by input curve, then by branch (the '+' branch first).
    Curves that hit a branch point or leave the image are dropped and
    recorded in ``meta['lift_errors']``.
    """
    from .mapzoo import branch_inverse_array, evaluate_array

    lifted: list[Polyline] = []
    errors: list[dict[str, Any]] = []
    worst = 0.0
    for i, c in enumerate(fam.curves):
        try:
            branches = branch_inverse_array(fmap, c.vertices)
        except (BranchPointError, ContractViolation) as exc:
            errors.append({"curve": i, "error": type(exc).__name__, "detail": str(exc)})
            continue
        for pre in branches:
            worst = max(worst, float(np.max(np.linalg.norm(evaluate_array(fmap, pre) - c.vertices, axis=1))))
            seg = np.linalg.norm(np.diff(pre, axis=0), axis=1)
            lifted.append(Polyline(pre, step=float(seg.max())))
    meta = {
        "generator": "lift",
        "map": fmap.describe(),
        "source": fam.meta.get("generator"),
        "source_size": len(fam),
        "lift_errors": errors,
        "round_trip_error": worst,
        "empty": not lifted,
    }
    return CurveFamily(lifted, meta)


def _segment_pieces(grid: Grid, verts: np.ndarray):
    """Split every segment of a vertex chain at grid planes.

    Returns (cell flat index, length) for each piece, in curve order.
    """
    lo = np.asarray(grid.lo)
    side = grid.side
    u = (verts - lo) / side  # grid units
    a, b = u[:-1], u[1:]
    nseg = len(a)
    seg_len = np.linalg.norm(np.diff(verts, axis=0), axis=1)
    seg_ids = [np.arange(nseg)]
    ts = [np.zeros(nseg)]
    for ax in range(grid.dim):
        ua, ub = a[:, ax], b[:, ax]
        k0 = np.floor(np.minimum(ua, ub)) + 1
        k1 = np.ceil(np.maximum(ua, ub)) - 1
        cnt = np.maximum(k1 - k0 + 1, 0).astype(np.int64)
        if cnt.sum() == 0:
            continue
        sid = np.repeat(np.arange(nseg), cnt)
        offs = np.arange(cnt.sum()) - np.repeat(np.cumsum(cnt) - cnt, cnt)
        planes = k0[sid] + offs
        t = (planes - ua[sid]) / (ub[sid] - ua[sid])
        keep = (t > 0) & (t < 1)
        seg_ids.append(sid[keep])
        ts.append(t[keep])
    sid = np.concatenate(seg_ids + [np.arange(nseg)])
    t = np.concatenate(ts + [np.ones(nseg)])
    order = np.lexsort((t, sid))
    sid, t = sid[order], t[order]
    same = sid[1:] == sid[:-1]
    t0, t1, s = t[:-1][same], t[1:][same], sid[:-1][same]
    piece = t1 - t0
    good = piece > 1e-13
    t0, t1, s, piece = t0[good], t1[good], s[good], piece[good]
    mid = verts[:-1][s] + ((t0 + t1) / 2)[:, None] * (verts[1:][s] - verts[:-1][s])
    cells = grid.flat_index(grid.cell_coords(mid))
    return cells, piece * seg_len[s]


def curve_cell_incidence(c: Polyline, grid: Grid) -> list[tuple[int, float]]:
    """Cells traversed by the curve with the length spent in each (merged, ordered by first visit)."""
    cells, lengths = incidence_arrays(c, grid)
    return list(zip(cells.tolist(), lengths.tolist()))


def incidence_arrays(c: Polyline, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    if c.dim != grid.dim:
        raise ContractViolation("curve and grid dimensions differ")
    if not np.all(grid.contains_points(c.vertices)):
        raise ContractViolation("curve leaves the grid bounding box")
    cells, lengths = _segment_pieces(grid, c.vertices)
    uniq, first, inv = np.unique(cells, return_index=True, return_inverse=True)
    sums = np.bincount(inv, weights=lengths)
    order = np.argsort(first, kind="stable")
    return uniq[order], sums[order]
