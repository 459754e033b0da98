from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from _oracles import (
    UNIT_GRID, convex_finite, dense_lp_p1, exact_qp_p2, overflowing_pair, potential_qp, random_family,
)
from conftest import RING_TARGET, ring_spec
from modlab.curve import CurveFamily, Polyline, connecting_family_spec, radial_family
from modlab.errors import ContractViolation
from modlab.geom import Annulus, Ball, Box, Sphere
from modlab.grid import Grid
from modlab.modsolve import (
    DensityField, GridPathOracle, curve_length_under_density, energy, modulus_connecting, modulus_finite,
    ring_lower_bound,
)

UNIT = Grid((0.0, 0.0), (1.0, 1.0), (8, 8))


def rect_spec(w=2.0, h=1.0):
    big = 10.0 * max(w, h)
    return connecting_family_spec(Box((-big, -big), (0.0, big)), Box((w, -big), (w + big, big)), Box((0.0, 0.0), (w, h)))


# energy and lengths ------------------------------------------------------------------

def test_energy_examples():
    assert energy(DensityField.constant(UNIT, 0.0), 2) == 0.0
    for p in (1, 2, 3.5):
        assert energy(DensityField.constant(UNIT, 1.0), p) == pytest.approx(1.0)
    assert energy(DensityField.constant(UNIT, 2.0), 2) == pytest.approx(4.0)
    with pytest.raises(ContractViolation):
        energy(DensityField.constant(UNIT, 1.0), 0.5)


def test_density_contracts():
    with pytest.raises(ContractViolation):
        DensityField(UNIT, -np.ones(UNIT.size))
    with pytest.raises(ContractViolation):
        DensityField(UNIT, np.ones(3))


def test_length_examples():
    seg = Polyline(np.array([[0.1, 0.3], [0.9, 0.9]]))
    assert curve_length_under_density(seg, DensityField.constant(UNIT, 1.0)) == pytest.approx(1.0)
    assert curve_length_under_density(seg, DensityField.constant(UNIT, 0.0)) == 0.0
    g = Grid.square(2.0, 64, 2)
    rho = DensityField.constant(g, 1.0)
    for c in radial_family(Annulus((0.0, 0.0), 1.0, 2.0), 7):
        assert curve_length_under_density(c, rho) == pytest.approx(1.0)


def test_ring_lower_bound():
    assert ring_lower_bound(1.0) == pytest.approx(math.log(2), abs=1e-12)
    assert ring_lower_bound(0.1) == pytest.approx(math.log(11), abs=1e-12)
    vals = [ring_lower_bound(m) for m in (1, 10, 100, 1e4)]
    assert all(a > b > 0 for a, b in zip(vals, vals[1:]))
    with pytest.raises(ContractViolation):
        ring_lower_bound(0.0)


# finite families against exact oracles ---------------------------------------------

def test_empty_family():
    res = modulus_finite(CurveFamily([], {"empty": True}), UNIT)
    assert res.value == 0.0 and res.flags["empty_family"]


def test_single_segment_matches_qp():
    fam = CurveFamily([Polyline(np.array([[0.0, 0.5], [1.0, 0.5]]))])
    res = modulus_finite(fam, UNIT, 2, gap_tol=1e-10)
    assert res.value == pytest.approx(exact_qp_p2(fam, UNIT), rel=1e-6)
    assert res.value == pytest.approx(1 / 8, rel=1e-9)  # all mass on the one row of cells the segment crosses


def test_radial_family_matches_qp():
    g = Grid.square(2.0, 16, 2)
    fam = radial_family(Annulus((0.0, 0.0), 1.0, 2.0), 4)
    exact = exact_qp_p2(fam, g)
    res = modulus_finite(fam, g, 2, gap_tol=1e-10)
    assert abs(res.value - exact) / exact < 1e-6


@pytest.mark.parametrize("seed", range(8))
def test_random_family_p2_matches_qp(seed):
    rng = np.random.default_rng(seed)
    fam = random_family(rng, int(rng.integers(2, 7)))
    exact = exact_qp_p2(fam, UNIT_GRID)
    tight = modulus_finite(fam, UNIT_GRID, 2, gap_tol=1e-10)
    assert abs(tight.value - exact) / exact < 1e-6
    loose = modulus_finite(fam, UNIT_GRID, 2)
    assert loose.certified
    assert loose.lower_bound <= exact * (1 + 1e-9) and exact <= loose.value * (1 + 1e-9)
    # the gap is relative to the reported value
    assert abs(loose.value - exact) / loose.value <= max(loose.gap, 0.0) + 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_random_family_p1_matches_lp(seed):
    rng = np.random.default_rng(100 + seed)
    fam = random_family(rng, int(rng.integers(2, 9)))
    res = modulus_finite(fam, UNIT_GRID, 1)
    assert res.value == pytest.approx(dense_lp_p1(fam, UNIT_GRID), rel=1e-6)
    assert res.gap <= 1e-6


@pytest.mark.parametrize("p", [1.5, 3.0])
def test_general_p_brackets_conic_solution(p):
    fam = random_family(np.random.default_rng(7), 5)
    ref = convex_finite(fam, UNIT_GRID, p)
    res = modulus_finite(fam, UNIT_GRID, p)
    assert res.lower_bound <= ref * (1 + 1e-6) and ref <= res.value * (1 + 1e-6)


def test_returned_density_is_admissible():
    fam = random_family(np.random.default_rng(11), 6)
    res = modulus_finite(fam, UNIT_GRID, 2)
    lengths = [curve_length_under_density(c, res.density) for c in fam]
    assert min(lengths) >= 1 - 1e-12
    assert res.value == pytest.approx(energy(res.density, 2))


def test_report_serializes():
    res = modulus_finite(random_family(np.random.default_rng(2), 3), UNIT_GRID, 2)
    d = json.loads(json.dumps(res.to_dict(include_density=True)))
    assert set(d) >= {"value", "gap", "iterations", "mode", "grid", "density"}
    assert len(d["density"]) == UNIT_GRID.size


def test_scaling_law():
    # M(lambda * Gamma) = lambda^(n - p) M(Gamma) on the scaled grid
    fam = random_family(np.random.default_rng(5), 4)
    big = CurveFamily([Polyline(3.0 * c.vertices) for c in fam])
    big_grid = Grid((0.0, 0.0), (3.0, 3.0), UNIT_GRID.shape)
    for p in (2.0, 3.0):
        a = modulus_finite(fam, UNIT_GRID, p, gap_tol=1e-8).value
        b = modulus_finite(big, big_grid, p, gap_tol=1e-8).value
        assert b == pytest.approx(3.0 ** (2 - p) * a, rel=1e-6)


# property suite (randomized) ----------------------------------------------------------

def _tol(*results) -> float:
    return sum(r.gap for r in results) + 1e-9


@settings(max_examples=25, deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 2**32 - 1), p=st.sampled_from([1.0, 2.0, 3.0]))
def test_monotone_and_subadditive(seed, p):
    rng = np.random.default_rng(seed)
    a = random_family(rng, int(rng.integers(1, 5)))
    b = random_family(rng, int(rng.integers(1, 5)))
    ra, rb, rab = (modulus_finite(f, UNIT_GRID, p) for f in (a, b, a | b))
    assert ra.value <= rab.value * (1 + _tol(ra, rab))
    assert rb.value <= rab.value * (1 + _tol(rb, rab))
    assert rab.value <= (ra.value + rb.value) * (1 + _tol(ra, rb, rab))


@settings(max_examples=25, deadline=None, derandomize=True, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 2**32 - 1), p=st.sampled_from([1.0, 2.0, 3.0]))
def test_overflowing(seed, p):
    rng = np.random.default_rng(seed)
    big, small = overflowing_pair(rng, int(rng.integers(1, 5)))
    rb, rs = modulus_finite(big, UNIT_GRID, p), modulus_finite(small, UNIT_GRID, p)
    assert rb.value <= rs.value * (1 + _tol(rb, rs))


# connecting mode -----------------------------------------------------------------------

@pytest.mark.parametrize("radius,p", [(1, 2.0), (1, 3.0), (3, 2.0)])
def test_connecting_ring_matches_potential_qp(radius, p):
    g = Grid.square(2.0, 16, 2)
    exact = potential_qp(ring_spec(), g, p, radius)
    res = modulus_connecting(ring_spec(), g, p, stencil_radius=radius, slack=1e-9, gap_tol=1e-9)
    assert abs(res.value - exact) / exact < 1e-6
    loose = modulus_connecting(ring_spec(), g, p, stencil_radius=radius)
    assert loose.lower_bound <= exact * (1 + 1e-7) <= loose.flags["admissible_upper_bound"] * (1 + 1e-6)


@pytest.mark.parametrize("radius,p", [(1, 2.0), (3, 2.0), (1, 3.0)])
def test_connecting_rectangle_matches_potential_qp(radius, p):
    g = Grid((0.0, 0.0), (2.0, 1.0), (16, 8))
    exact = potential_qp(rect_spec(), g, p, radius)
    res = modulus_connecting(rect_spec(), g, p, stencil_radius=radius, slack=1e-9, gap_tol=1e-9)
    assert abs(res.value - exact) / exact < 1e-6
    assert exact == pytest.approx(0.5 ** (p - 1), rel=1e-6)


def test_connecting_3d_matches_potential_qp():
    spec = connecting_family_spec(
        Box((-9.0, -9.0, -9.0), (0.0, 9.0, 9.0)), Box((1.0, -9.0, -9.0), (10.0, 9.0, 9.0)), Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    )
    g = Grid((0.0,) * 3, (1.0,) * 3, (6, 6, 6))
    exact = potential_qp(spec, g, 3.0, 1)
    res = modulus_connecting(spec, g, 3.0, slack=1e-9, gap_tol=1e-9)
    assert abs(res.value - exact) / exact < 1e-6
    assert exact == pytest.approx(1.0, rel=1e-6)


def test_connecting_density_admissibility_flags():
    res = modulus_connecting(ring_spec(), Grid.square(2.0, 32, 2))
    assert res.mode == "connecting" and res.certified
    assert res.flags["shortest_path"] >= 1 - res.flags["slack"] - 1e-12
    assert res.flags["admissible_upper_bound"] >= res.value
    assert res.lower_bound <= res.value


def test_unreachable_terminals():
    spec = connecting_family_spec(Ball((0.2, 0.5), 0.1), Ball((1.8, 0.5), 0.1), Box((0.0, 0.0), (2.0, 1.0)))
    mask = np.ones((16, 8), dtype=bool)
    mask[8, :] = False  # a wall of removed cells splits the domain
    wall = connecting_family_spec(spec.E, spec.F, mask)
    res = modulus_connecting(wall, Grid((0.0, 0.0), (2.0, 1.0), (16, 8)))
    assert res.value == 0.0 and res.flags["unreachable"]
    far = connecting_family_spec(Ball((5.0, 5.0), 0.1), Ball((1.8, 0.5), 0.1), Box((0.0, 0.0), (2.0, 1.0)))
    res = modulus_connecting(far, Grid((0.0, 0.0), (2.0, 1.0), (16, 8)))
    assert res.value == 0.0 and res.flags["unreachable"]


def test_connecting_rejects_p1():
    with pytest.raises(ContractViolation):
        modulus_connecting(ring_spec(), Grid.square(2.0, 16, 2), 1.0)


def test_oracle_edge_weights_axis_and_diagonal():
    g = Grid((0.0, 0.0), (1.0, 1.0), (4, 4))
    orc = GridPathOracle(rect_spec(1.0, 1.0), g, stencil_radius=1)
    rho = np.arange(1.0, g.size + 1)
    w = orc.edge_weights(rho)
    for a, b, rel, wt in orc.groups:
        step = float(np.linalg.norm(g.centers[b[0]] - g.centers[a[0]]))
        assert sum(wt) == pytest.approx(step)
    assert np.all(w > 0)


def test_ring_refinement_error_decreases(ring_runs):
    errs = [abs(ring_runs[c][0].value - RING_TARGET) / RING_TARGET for c in (64, 128, 256)]
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.xfail(strict=True, reason="the radius-3 stencil has an angular bias of about 2 percent, "
                   "so the error at 256^2 is not half the error at 128^2")
def test_ring_refinement_error_halves(ring_runs):
    errs = [abs(ring_runs[c][0].value - RING_TARGET) / RING_TARGET for c in (64, 128, 256)]
    assert errs[2] <= 0.5 * errs[1] * 1.2
