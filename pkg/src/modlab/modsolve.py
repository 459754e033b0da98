"""Discrete p-modulus of curve families on uniform grids.

A density is one nonnegative value per grid cell.  ``modulus_finite`` solves
the convex program over an explicit list of polylines; ``modulus_connecting``
handles the family of *all* grid curves joining two sets inside a domain by
constraint generation, using shortest paths under the current density as the
separation oracle.
"""

from __future__ import annotations

import hashlib
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.csgraph import dijkstra

from . import _kernels
from .curve import ConnectingSpec, CurveFamily, Polyline, incidence_arrays
from .errors import ContractViolation
from .grid import Grid

log = logging.getLogger(__name__)

GAP_TOL = 1e-3
FEASIBILITY_SLACK = 1e-3
MAX_ITER = 100_000
OMEGA = 1.0
ROUND_SWEEPS = 50
PRUNE_FACTOR = 4
PATHS_PER_ROUND = 1
FIRST_ROUND_BOOST = 8
FULL_EVERY = 1


@dataclass
class DensityField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size != self.grid.size:
            raise ContractViolation("density needs one value per grid cell")
        v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ContractViolation("density values must be finite and nonnegative")
        self.values = v

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "DensityField":
        return cls(grid, np.full(grid.shape, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "DensityField":
        return cls(grid, np.asarray(fn(grid.centers), dtype=float))

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()


@dataclass
class ModulusResult:
    value: float
    density: DensityField
    gap: float
    iterations: int
    active: int
    mode: str
    certified: bool
    p: float
    flags: dict[str, Any] = field(default_factory=dict)
    lower_bound: float = 0.0

    def to_dict(self, include_density: bool = False) -> dict[str, Any]:
        out = {
            "value": self.value,
            "lower_bound": self.lower_bound,
            "gap": self.gap,
            "iterations": self.iterations,
            "active_constraints": self.active,
            "mode": self.mode,
            "certified": self.certified,
            "p": self.p,
            "grid": self.density.grid.describe(),
            "flags": self.flags,
        }
        if include_density:
            out["density"] = self.density.flat.tolist()
        return out


def energy(rho: DensityField, p: float) -> float:
    """Sum over cells of rho**p times the cell volume."""
    if p < 1:
        raise ContractViolation("p must be >= 1")
    return float(np.sum(rho.values ** p) * rho.grid.cell_volume)


def curve_length_under_density(c: Polyline, rho: DensityField) -> float:
    cells, lengths = incidence_arrays(c, rho.grid)
    return float(np.dot(rho.flat[cells], lengths))


def ring_lower_bound(m_ratio: float) -> float:
    """log(1 + 1/m): the shape of the ring lower bound, without its dimensional constant."""
    if not m_ratio > 0:
        raise ContractViolation("m_ratio must be positive")
    return math.log1p(1.0 / m_ratio)


def incidence_matrix(fam: CurveFamily, grid: Grid) -> sp.csr_matrix:
    """Rows = curves, columns = grid cells, entries = length of the curve inside the cell."""
    rows, cols, vals = [], [], []
    for k, c in enumerate(fam.curves):
        cells, lengths = incidence_arrays(c, grid)
        rows.append(np.full(cells.size, k))
        cols.append(cells)
        vals.append(lengths)
    if not rows:
        return sp.csr_matrix((0, grid.size))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(len(fam), grid.size)
    )


class _DualSolver:
    """Warm-startable dual coordinate ascent over a growing set of constraint rows."""

    def __init__(self, ncells: int, vol: float, p: float):
        self.ncells = ncells
        self.vol = vol
        self.p = float(p)
        self.rows = sp.csr_matrix((0, ncells))
        self.lam = np.zeros(0)
        self.s = np.zeros(ncells)
        self.sweeps = 0
        self.keys: list[bytes] = []  # one digest per row, to skip repeated paths
        self._seen: set[bytes] = set()

    def add_rows(self, rows: sp.csr_matrix) -> int:
        """Append the rows not already present; returns how many were new."""
        rows = sp.csr_matrix(rows)
        rows.sum_duplicates()
        keep = []
        for i in range(rows.shape[0]):
            lo, hi = rows.indptr[i], rows.indptr[i + 1]
            key = hashlib.blake2b(rows.indices[lo:hi].tobytes() + rows.data[lo:hi].tobytes(), digest_size=16).digest()
            if key not in self._seen:
                self._seen.add(key)
                keep.append(i)
                self.keys.append(key)
        if keep:
            self.rows = sp.vstack([self.rows, rows[keep]], format="csr")
            self.lam = np.concatenate([self.lam, np.zeros(len(keep))])
        return len(keep)

    def prune(self) -> int:
        keep = self.lam > 0
        dropped = int((~keep).sum())
        if dropped:
            self.rows = self.rows[keep]
            self.lam = self.lam[keep]
            self.keys = [k for k, f in zip(self.keys, keep) if f]
            self._seen = set(self.keys)
        return dropped

    def solve(self, gap_tol: float, max_sweeps: int, check_every: int = 10) -> float:
        L = self.rows
        L.sort_indices()
        omega = OMEGA if self.p == 2.0 else 1.0
        sweeps, gap = _kernels.hildreth(
            L.indptr.astype(np.int64), L.indices.astype(np.int32, copy=False), L.data,
            self.lam, self.s, self.p, self.vol, omega, int(max_sweeps), float(gap_tol), int(check_every), FULL_EVERY,
        )
        self.sweeps += int(sweeps)
        return float(gap)

    def rho(self) -> np.ndarray:
        s = np.maximum(self.s, 0.0)
        if self.p == 2.0:
            return s / (2.0 * self.vol)
        return (s / (self.p * self.vol)) ** (1.0 / (self.p - 1.0))

    def dual_value(self) -> float:
        r = self.rho()
        return float(self.lam.sum() - (self.p - 1.0) * self.vol * np.sum(r ** self.p))


def _empty_result(grid: Grid, p: float, mode: str, **flags) -> ModulusResult:
    return ModulusResult(0.0, DensityField.constant(grid, 0.0), 0.0, 0, 0, mode, True, p, {"empty_family": True, **flags})


def modulus_finite(
    fam: CurveFamily,
    grid: Grid,
    p: float = 2.0,
    *,
    gap_tol: float = GAP_TOL,
    max_iter: int = MAX_ITER,
) -> ModulusResult:
    """Discrete p-modulus of an explicit finite family.

    The returned density is scaled so that every curve has rho-length >= 1,
    hence ``value`` is an upper bound for the discrete optimum and
    ``lower_bound`` (a dual value) a lower one; ``gap`` is their relative
    difference.
    """
    if p < 1:
        raise ContractViolation("p must be >= 1")
    if len(fam) == 0:
        return _empty_result(grid, p, "finite-family")
    L = incidence_matrix(fam, grid)
    used = np.unique(L.indices)
    local = sp.csr_matrix(L[:, used])
    vol = grid.cell_volume

    if p == 1:
        return _finite_lp(local, used, grid, len(fam))

    solver = _DualSolver(used.size, vol, p)
    solver.add_rows(local)
    gap = solver.solve(gap_tol, max_iter)
    rho_local = solver.rho()
    lengths = local @ rho_local
    scale = 1.0 / lengths.min()
    rho = np.zeros(grid.size)
    rho[used] = rho_local * scale
    dens = DensityField(grid, rho)
    value = energy(dens, p)
    lower = max(solver.dual_value(), 0.0)
    gap = (value - lower) / value
    return ModulusResult(
        value, dens, gap, solver.sweeps, int((solver.lam > 0).sum()), "finite-family",
        gap <= gap_tol, p, {"family_size": len(fam)}, lower,
    )


def _finite_lp(local: sp.csr_matrix, used: np.ndarray, grid: Grid, nfam: int) -> ModulusResult:
    vol = grid.cell_volume
    res = linprog(
        np.full(used.size, vol), A_ub=-local, b_ub=-np.ones(local.shape[0]), bounds=(0, None), method="highs"
    )
    if res.status != 0:
        raise RuntimeError(f"LP solve failed: {res.message}")
    x = np.maximum(res.x, 0.0)
    x /= min(1.0, (local @ x).min())
    rho = np.zeros(grid.size)
    rho[used] = x
    dens = DensityField(grid, rho)
    value = energy(dens, 1.0)
    lower = float(-res.ineqlin.marginals.sum()) if res.ineqlin is not None else value
    gap = max(value - lower, 0.0) / value
    return ModulusResult(value, dens, gap, int(res.nit), int((np.abs(res.ineqlin.marginals) > 0).sum()),
                         "finite-family", True, 1.0, {"family_size": nfam, "solver": "highs-lp"}, lower)


# ---------------------------------------------------------------------------
# connecting mode


def _stencil(n: int, radius: int) -> list[tuple[int, ...]]:
    offs = []
    for o in itertools.product(range(-radius, radius + 1), repeat=n):
        if any(o) and math.gcd(*[abs(v) for v in o]) == 1:
            offs.append(o)
    return offs


def _crossed_cells(o: tuple[int, ...]) -> list[tuple[tuple[int, ...], float]]:
    """Cells (relative coords) crossed by the center-to-center segment 0 -> o, with length fractions."""
    o_arr = np.asarray(o, dtype=float)
    ts = {0.0, 1.0}
    for ax, v in enumerate(o):
        if v == 0:
            continue
        for k in range(min(0, v) - 1, max(0, v) + 1):
            t = (k + 0.5) / v
            if 0 < t < 1:
                ts.add(t)
    ts = sorted(ts)
    out: dict[tuple[int, ...], float] = {}
    for a, b in zip(ts[:-1], ts[1:]):
        mid = 0.5 * (a + b) * o_arr
        cell = tuple(int(math.floor(x + 0.5)) for x in mid)
        out[cell] = out.get(cell, 0.0) + (b - a)
    return list(out.items())


class GridPathOracle:
    """Shortest rho-weighted grid path between two terminal sets inside a domain.

    Nodes are cell centers; edges join a cell to every stencil neighbour whose
    connecting segment stays inside domain cells.  An edge's weight is the
    exact line integral of the cellwise-constant density along that segment
    (for axis and diagonal neighbours this is the endpoint average times the
    step).  Paths start and end with straight terminal pieces from E to the
    first cell center and from the last center to F.
    """

    def __init__(self, spec: ConnectingSpec, grid: Grid, stencil_radius: int | None = None):
        if spec.dim != grid.dim:
            raise ContractViolation("family and grid dimensions differ")
        self.grid = grid
        n = grid.dim
        if stencil_radius is None:
            stencil_radius = 3 if n == 2 else 1
        self.radius = stencil_radius
        centers = grid.centers
        if isinstance(spec.domain, np.ndarray):
            dom = np.asarray(spec.domain, dtype=bool).reshape(-1)
            if dom.size != grid.size:
                raise ContractViolation("domain mask must have one entry per cell")
        else:
            dom = spec.domain.contains(centers)
        self.domain = dom
        half_diag = 0.5 * float(np.linalg.norm(grid.side))
        dE = spec.E.distance(centers)
        dF = spec.F.distance(centers)
        self.E = np.flatnonzero(dom & (dE <= half_diag))
        self.F = np.flatnonzero(dom & (dF <= half_diag))
        self.tE = dE[self.E]
        self.tF = dF[self.F]
        self._build_edges(stencil_radius)

    def _build_edges(self, radius: int) -> None:
        grid = self.grid
        shape = np.asarray(grid.shape)
        n = grid.dim
        idx = np.arange(grid.size).reshape(grid.shape)
        dom = self.domain.reshape(grid.shape)
        strides = np.array([int(np.prod(shape[i + 1:])) for i in range(n)])
        self.groups = []  # (a, b, rel flat offsets, weights = fraction * step)
        self.code_base = 2 * radius + 1
        self.group_of_code = {}
        for o in _stencil(n, radius):
            crossed = _crossed_cells(o)
            step = float(np.linalg.norm(np.asarray(o) * grid.side))
            lo = np.array([max(0, -v) for v in o] + [0] * 0)
            for cell, _ in crossed:
                lo = np.maximum(lo, [-min(0, c) for c in cell])
            hi = shape.copy()
            for cell, _ in crossed:
                hi = np.minimum(hi, shape - np.array([max(0, c) for c in cell]))
            hi = np.minimum(hi, shape - np.array([max(0, v) for v in o]))
            if np.any(hi <= lo):
                continue
            sl = tuple(slice(int(a), int(b)) for a, b in zip(lo, hi))
            ok = dom[sl].copy()
            for cell, _ in crossed:
                shifted = tuple(slice(int(a) + c, int(b) + c) for a, b, c in zip(lo, hi, cell))
                ok &= dom[shifted]
            a = idx[sl][ok]
            if a.size == 0:
                continue
            rel = np.array([int(np.dot(cell, strides)) for cell, _ in crossed], dtype=np.int64)
            w = np.array([f * step for _, f in crossed])
            b = a + int(np.dot(o, strides))
            code = int(np.dot(np.asarray(o) + radius, self.code_base ** np.arange(n)))
            self.group_of_code[code] = len(self.groups)
            self.groups.append((a, b, rel, w))
        # fixed CSR structure: nodes 0..size-1 are cells, node `size` feeds E and
        # node `size + 1` feeds F.  Stencil edges come in symmetric pairs, so one
        # graph serves searches from either terminal.
        src = self.grid.size
        heads = [g[0] for g in self.groups] + [np.full(self.E.size, src), np.full(self.F.size, src + 1)]
        tails = [g[1] for g in self.groups] + [self.E, self.F]
        heads = np.concatenate(heads)
        tails = np.concatenate(tails)
        order = np.lexsort((tails, heads))
        self._indices = tails[order].astype(np.int32)
        counts = np.bincount(heads, minlength=src + 2)
        self._indptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int32)
        self.source = src
        self.sink = src + 1
        self.n_edges = int(heads.size - self.E.size - self.F.size)
        # edge weights as one sparse product, rows already in CSR edge order
        er, ec, ev = [], [], []
        start = 0
        for a, _, rel, w in self.groups:
            for r, wt in zip(rel, w):
                er.append(np.arange(start, start + a.size))
                ec.append(a + r)
                ev.append(np.full(a.size, wt))
            start += a.size
        for cells, t in ((self.E, self.tE), (self.F, self.tF)):
            er.append(np.arange(start, start + cells.size))
            ec.append(cells)
            ev.append(t)
            start += cells.size
        inv = np.empty_like(order)
        inv[order] = np.arange(order.size)
        self._weight_matrix = sp.csr_matrix(
            (np.concatenate(ev), (inv[np.concatenate(er)], np.concatenate(ec))), shape=(heads.size, grid.size)
        )
        self._t_end = np.zeros((2, grid.size))
        self._t_end[0, self.E] = self.tE
        self._t_end[1, self.F] = self.tF

    @property
    def reachable_terminals(self) -> bool:
        return self.E.size > 0 and self.F.size > 0

    def edge_weights(self, rho: np.ndarray) -> np.ndarray:
        """Edge weights in CSR edge order (stencil edges, then terminal edges)."""
        return self._weight_matrix @ rho

    def search(self, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Distances and predecessor trees from the E side (row 0) and the F side (row 1)."""
        floor = 1e-12 * float(self.grid.side.min())
        data = self.edge_weights(rho) + floor
        G = sp.csr_matrix((data, self._indices, self._indptr), shape=(self.sink + 1, self.sink + 1))
        return dijkstra(G, directed=True, indices=[self.source, self.sink], return_predecessors=True)

    def shortest(self, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """rho-length of the shortest path ending at each F cell, and the predecessor tree."""
        dist, pred = self.search(rho)
        return dist[0, self.F] + rho[self.F] * self.tF, pred[0]

    def through_lengths(self, rho: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """For every cell, the rho-length of the shortest E-to-F path through its center."""
        dist, pred = self.search(rho)
        return dist[0, :-2] + dist[1, :-2], pred

    def path_rows(self, pred: np.ndarray, targets: np.ndarray) -> sp.csr_matrix:
        """Constraint rows for the paths ending at F-cell positions ``targets`` (tree from E)."""
        cells, offs = _kernels.trace_paths(
            pred.astype(np.int64), self.source, self.F[targets].astype(np.int64), self.grid.size + 2
        )
        return self._rows(cells, offs)

    def through_rows(self, pred: np.ndarray, nodes: np.ndarray) -> sp.csr_matrix:
        """Constraint rows for the shortest E-to-F paths through the given cells."""
        cells, offs = _kernels.join_paths(
            pred[0].astype(np.int64), pred[1].astype(np.int64), self.source, self.sink,
            nodes.astype(np.int64), self.grid.size + 2,
        )
        return self._rows(cells, offs)

    def _rows(self, cells: np.ndarray, offs: np.ndarray) -> sp.csr_matrix:
        npath = offs.size - 1
        pid = np.repeat(np.arange(npath), np.diff(offs))
        first = cells[offs[:-1]]
        last = cells[offs[1:] - 1]
        rows = [np.arange(npath), np.arange(npath)]
        cols = [first, last]
        vals = [self._t_end[0, first], self._t_end[1, last]]
        same = pid[1:] == pid[:-1]
        a = cells[:-1][same]
        b = cells[1:][same]
        epid = pid[:-1][same]
        if a.size:
            ca = np.stack(np.unravel_index(a, self.grid.shape), axis=1)
            cb = np.stack(np.unravel_index(b, self.grid.shape), axis=1)
            code = ((cb - ca) + self.radius) @ (self.code_base ** np.arange(self.grid.dim))
            for c in np.unique(code):
                g = self.group_of_code[int(c)]
                _, _, rel, w = self.groups[g]
                sel = code == c
                for r, wt in zip(rel, w):
                    rows.append(epid[sel])
                    cols.append(a[sel] + r)
                    vals.append(np.full(int(sel.sum()), wt))
        M = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(npath, self.grid.size)
        )
        M.sum_duplicates()
        return M


def modulus_connecting(
    spec: ConnectingSpec,
    grid: Grid,
    p: float = 2.0,
    *,
    slack: float = FEASIBILITY_SLACK,
    gap_tol: float = GAP_TOL,
    max_iter: int = MAX_ITER,
    max_rounds: int = 500,
    stencil_radius: int | None = None,
    multilevel: bool = True,
    initial_density: np.ndarray | None = None,
) -> ModulusResult:
    """Discrete p-modulus of all grid curves joining E to F inside the domain.

    Constraint generation: keep a finite active family, add every path whose
    rho-length is below 1 - slack, re-solve, and stop when the shortest path
    is at least 1 - slack.  The returned density makes every active path
    exactly admissible and every grid path joining E to F at least 1 - slack
    long; ``gap`` is the duality gap of the active family and
    ``flags['admissible_upper_bound']`` the energy after rescaling by the
    true shortest path.
    """
    if p <= 1:
        raise ContractViolation("connecting mode supports p > 1")
    oracle = GridPathOracle(spec, grid, stencil_radius)
    if not oracle.reachable_terminals:
        return _empty_result(grid, p, "connecting", unreachable=True)

    if initial_density is None and multilevel and all(s % 2 == 0 and s >= 128 for s in grid.shape):
        coarse = modulus_connecting(
            spec, grid.coarsen(), p, slack=slack * 4, gap_tol=gap_tol * 4, max_iter=max_iter,
            max_rounds=max_rounds, stencil_radius=stencil_radius, multilevel=True,
        )
        if not coarse.flags.get("empty_family"):
            r = coarse.density.values
            for ax in range(grid.dim):
                r = np.repeat(r, 2, axis=ax)
            initial_density = r.ravel() * oracle.domain

    rho = np.zeros(grid.size) if initial_density is None else np.asarray(initial_density, dtype=float).ravel()
    through, pred = oracle.through_lengths(rho)
    if not np.isfinite(through).any():
        return _empty_result(grid, p, "connecting", unreachable=True)

    used_cols = np.flatnonzero(oracle.domain)
    solver = _DualSolver(used_cols.size, grid.cell_volume, p)
    cap = int(PATHS_PER_ROUND * (oracle.E.size + oracle.F.size))
    rounds = 0
    added = 0
    gap = math.inf
    polished = False
    while rounds < max_rounds:
        finite = np.isfinite(through)
        min_len = float(through[finite].min())
        violated = np.flatnonzero(finite & (through < 1.0 - slack))
        if violated.size == 0:
            if polished or gap <= gap_tol * 0.25:
                break
            # oracle is satisfied by a rough dual iterate: finish the inner solve and re-check
            gap = solver.solve(gap_tol * 0.25, max_iter)
            polished = True
        else:
            limit = cap
            if rounds == 0:
                # seed with paths through the whole domain so the first dual iterate has no holes
                violated = np.flatnonzero(finite)
                limit = int(cap * FIRST_ROUND_BOOST)
            if violated.size > limit:
                # spread the new paths over the whole domain instead of one corridor
                violated = violated[np.linspace(0, violated.size - 1, limit).round().astype(np.int64)]
            rows = sp.csr_matrix(oracle.through_rows(pred, violated)[:, used_cols])
            added += solver.add_rows(rows)
            polished = False
            inner_tol = max(gap_tol * 0.25, min(0.05, 0.3 * (1.0 - min_len)))
            gap = solver.solve(inner_tol, max_iter if rounds == 0 else min(max_iter, ROUND_SWEEPS))
            if solver.rows.shape[0] > PRUNE_FACTOR * cap:
                solver.prune()
        rho = np.zeros(grid.size)
        rho[used_cols] = solver.rho()
        through, pred = oracle.through_lengths(rho)
        rounds += 1
        log.debug("round %d: shortest %.6f, active rows %d", rounds, min_len, solver.rows.shape[0])

    # scale so the active family is exactly admissible
    rho_local = solver.rho()
    rho_local /= (solver.rows @ rho_local).min()
    rho = np.zeros(grid.size)
    rho[used_cols] = rho_local
    dist, _ = oracle.shortest(rho)
    shortest = float(dist[np.isfinite(dist)].min())
    dens = DensityField(grid, rho)
    value = energy(dens, p)
    lower = max(solver.dual_value(), 0.0)
    gap = (value - lower) / value if value > 0 else 0.0
    flags = {
        "rounds": rounds,
        "paths_added": added,
        "stencil_radius": oracle.radius,
        "edges": oracle.n_edges,
        "shortest_path": shortest,
        "admissible_upper_bound": value / min(shortest, 1.0) ** p,
        "slack": slack,
        "round_budget_exhausted": rounds >= max_rounds,
    }
    return ModulusResult(
        value, dens, gap, solver.sweeps, int((solver.lam > 0).sum()), "connecting", gap <= gap_tol, p, flags, lower,
    )
