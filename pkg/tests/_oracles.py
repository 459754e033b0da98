"""Independent reference solvers and random instances shared by the test modules."""

from __future__ import annotations

import itertools

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from modlab.curve import CurveFamily, Polyline, incidence_arrays
from modlab.grid import Grid
from modlab.modsolve import incidence_matrix


def exact_qp_p2(fam: CurveFamily, grid: Grid) -> float:
    """p = 2 finite-family modulus by enumerating every active set of the KKT system.

    The optimum is rho = L_S^T lam / (2 vol) for the active rows S with lam >= 0
    and every other row satisfied; the energy is then sum(lam) / 2.
    """
    L = incidence_matrix(fam, grid).toarray()
    vol = grid.cell_volume
    best = np.inf
    k = L.shape[0]
    for r in range(1, k + 1):
        for S in itertools.combinations(range(k), r):
            A = L[list(S)]
            G = A @ A.T / (2 * vol)
            lam, *_ = np.linalg.lstsq(G, np.ones(r), rcond=None)
            if np.any(lam < -1e-12) or not np.allclose(G @ lam, 1.0, atol=1e-10):
                continue
            rho = A.T @ lam / (2 * vol)
            if np.all(L @ rho >= 1 - 1e-10):
                best = min(best, vol * float(rho @ rho))
    return best


def dense_lp_p1(fam: CurveFamily, grid: Grid) -> float:
    """p = 1 finite-family modulus as a dense LP solved by GLPK."""
    L = incidence_matrix(fam, grid).toarray()
    rho = cp.Variable(grid.size, nonneg=True)
    prob = cp.Problem(cp.Minimize(grid.cell_volume * cp.sum(rho)), [L @ rho >= 1])
    prob.solve(solver="GLPK")
    return float(prob.value)


def convex_finite(fam: CurveFamily, grid: Grid, p: float) -> float:
    """Finite-family p-modulus by a generic conic solver."""
    L = incidence_matrix(fam, grid)
    rho = cp.Variable(grid.size, nonneg=True)
    prob = cp.Problem(cp.Minimize(grid.cell_volume * cp.sum(cp.power(rho, p))), [L @ rho >= 1])
    prob.solve(solver="CLARABEL")
    return float(prob.value)


def potential_qp(spec, grid: Grid, p: float, radius: int) -> float:
    """Connecting-mode modulus as one convex program over densities and node potentials.

    A path's rho-length is at least 1 for every E-to-F grid path iff some
    potential u satisfies u <= (terminal piece) at E, u_b <= u_a + w_ab on every
    edge and u + (terminal piece) >= 1 at F.  Edges join cell centers whose
    offset has sup-norm <= radius and whose segment stays in domain cells; edge
    weights are exact cell-length integrals of the segment.
    """
    c = grid.centers
    dom = np.asarray(spec.domain.contains(c), dtype=bool)
    half_diag = 0.5 * float(np.linalg.norm(grid.side))
    dE, dF = spec.E.distance(c), spec.F.distance(c)
    E = np.flatnonzero(dom & (dE <= half_diag))
    F = np.flatnonzero(dom & (dF <= half_diag))
    coords = np.stack(np.unravel_index(np.arange(grid.size), grid.shape), 1)
    ui, uj, uv, ri, rj, rv = [], [], [], [], [], []
    ne = 0
    for a in np.flatnonzero(dom):
        for o in itertools.product(range(-radius, radius + 1), repeat=grid.dim):
            if not any(o):
                continue
            cb = coords[a] + o
            if np.any(cb < 0) or np.any(cb >= grid.shape):
                continue
            b = int(np.ravel_multi_index(cb, grid.shape))
            cells, lens = incidence_arrays(Polyline(np.stack([c[a], c[b]])), grid)
            if not dom[cells].all():
                continue
            ui += [ne, ne]
            uj += [b, a]
            uv += [1.0, -1.0]
            ri += [ne] * len(cells)
            rj += list(cells)
            rv += list(lens)
            ne += 1
    Mu = sp.csr_matrix((uv, (ui, uj)), shape=(ne, grid.size))
    Mr = sp.csr_matrix((rv, (ri, rj)), shape=(ne, grid.size))
    rho = cp.Variable(grid.size, nonneg=True)
    u = cp.Variable(grid.size)
    cons = [Mu @ u - Mr @ rho <= 0, u[E] <= cp.multiply(dE[E], rho[E]), u[F] + cp.multiply(dF[F], rho[F]) >= 1]
    if (~dom).any():
        cons.append(rho[~dom] == 0)
    obj = grid.cell_volume * (cp.sum_squares(rho) if p == 2 else cp.sum(cp.power(rho, p)))
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver="CLARABEL", tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return float(prob.value)


# random instances ------------------------------------------------------------------

UNIT_GRID = Grid((0.0, 0.0), (1.0, 1.0), (10, 10))


def random_polyline(rng: np.random.Generator, lo: float = 0.05, hi: float = 0.95) -> Polyline:
    k = int(rng.integers(2, 5))
    return Polyline(rng.uniform(lo, hi, size=(k, 2)))


def random_family(rng: np.random.Generator, size: int) -> CurveFamily:
    return CurveFamily([random_polyline(rng) for _ in range(size)], {"generator": "random"})


def overflowing_pair(rng: np.random.Generator, size: int) -> tuple[CurveFamily, CurveFamily]:
    """(big, small) where every curve of ``big`` contains a curve of ``small``."""
    small = [random_polyline(rng, 0.2, 0.8) for _ in range(size)]
    big = []
    for c in small:
        head = rng.uniform(0.02, 0.98, size=(1, 2))
        tail = rng.uniform(0.02, 0.98, size=(1, 2))
        big.append(Polyline(np.vstack([head, c.vertices, tail])))
    return CurveFamily(big, {"generator": "overflow"}), CurveFamily(small, {"generator": "random"})
