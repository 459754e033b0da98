from __future__ import annotations

import csv
import io
import math

import numpy as np
import pytest
from scipy import integrate

from modlab.errors import BranchPointError, ContractViolation, DivergentIntegralError
from modlab.mapzoo import (
    MapFamily, QWeight, K_I_sum, K_O_analytic, K_O_numeric, K_O_printed, branch_inverse_array, branch_inverses,
    evaluate, evaluate_array, paired_q, q_eval, q_norm, sample_ball, sample_table, sphere_area, table_csv,
    well_conditioned_points, zoo,
)

PLANAR = [MapFamily("planar-branched", m, a) for m in (1, 2, 8) for a in (0.25, 0.5)]
SPATIAL = [MapFamily("spatial-branched", m, a, n=3) for m in (1, 2, 8) for a in (0.2, 0.5)]
BRANCHED = PLANAR + SPATIAL


def test_contracts():
    with pytest.raises(ContractViolation):
        MapFamily("mobius")
    with pytest.raises(ContractViolation):
        MapFamily("planar-branched", alpha=0.9)  # 2/p = 0.8
    with pytest.raises(ContractViolation):
        MapFamily("planar-branched", p=2.0)
    with pytest.raises(ContractViolation):
        MapFamily("spatial-branched", n=3, alpha=0.7)  # n/(p(n-1)) = 0.6
    with pytest.raises(ContractViolation):
        MapFamily("scaling", m=0)
    with pytest.raises(ContractViolation):
        evaluate(MapFamily("planar-branched"), (2.5, 0.0))
    assert zoo("scaling", m=3) == MapFamily("scaling", 3)


def test_evaluate_examples():
    assert np.allclose(evaluate(MapFamily("scaling", 3), (0.1, 0.0)), (0.3, 0.0))
    for fmap in BRANCHED:
        pts = 2.0 * np.eye(fmap.n)
        assert np.allclose(np.linalg.norm(evaluate_array(fmap, pts), axis=1), 1.0)


@pytest.mark.parametrize("fmap", BRANCHED, ids=lambda f: f"{f.kind}-m{f.m}-a{f.alpha}")
def test_image_in_unit_ball_and_gluing(fmap):
    rng = np.random.default_rng(0)
    x = sample_ball(rng, fmap.n, 1000, 0.0, 2.0)
    assert np.all(np.linalg.norm(evaluate_array(fmap, x), axis=1) <= 1 + 1e-12)
    u = sample_ball(rng, fmap.n, 50, 1.0, 1.0)
    g = fmap.glue_radius
    jump = evaluate_array(fmap, u * g * (1 + 1e-13)) - evaluate_array(fmap, u * g * (1 - 1e-13))
    assert np.max(np.linalg.norm(jump, axis=1)) < 1e-9


def test_gluing_example():
    fmap = MapFamily("planar-branched", 2, 0.5)
    g = 1 + 2 ** -0.5
    d = evaluate(fmap, (g + 1e-12, 0.0)) - evaluate(fmap, (g - 1e-12, 0.0))
    assert np.linalg.norm(d) < 1e-9


@pytest.mark.parametrize("fmap", BRANCHED, ids=lambda f: f"{f.kind}-m{f.m}-a{f.alpha}")
def test_round_trip_and_count(fmap):
    rng = np.random.default_rng(1)
    w = sample_ball(rng, fmap.n, 1000, 1e-6, 1.0)
    branches = branch_inverse_array(fmap, w)
    assert len(branches) == 2
    for pre in branches:
        assert np.max(np.linalg.norm(evaluate_array(fmap, pre) - w, axis=1)) < 1e-9
        assert np.all(np.linalg.norm(pre, axis=1) <= 2 + 1e-12)
    assert np.min(np.linalg.norm(branches[0] - branches[1], axis=1)) > 0
    # for m = 1 the linear inner piece covers the whole domain and every |w| <= 1 is in the ring
    ring = sample_ball(rng, fmap.n, 200, min(fmap.inner_image_radius, 0.5) * 1.001, 0.999)
    for y in ring:
        pre = branch_inverses(fmap, y)
        assert len(pre.points) == 2 and not pre.branch_point


def test_inverse_example_and_branch_point():
    fmap = MapFamily("planar-branched", 2, 0.5)
    w = 0.25 * np.array([math.cos(math.pi / 3), math.sin(math.pi / 3)])
    pre = branch_inverses(fmap, w)
    assert len(pre.points) == 2
    for z in pre.points:
        assert np.linalg.norm(evaluate(fmap, z) - w) < 1e-9
    zero = branch_inverses(fmap, (0.0, 0.0))
    assert zero.branch_point and len(zero.points) == 1 and np.allclose(zero.points[0], 0.0)
    with pytest.raises(BranchPointError):
        branch_inverse_array(fmap, np.array([[0.1, 0.0], [0.0, 0.0]]))
    with pytest.raises(ContractViolation):
        branch_inverses(fmap, (1.5, 0.0))


def test_scaling_inverse_round_trip():
    for m in (1, 3, 7):
        f, g = MapFamily("scaling", m), MapFamily("scaling", m, inverse=True)
        x = sample_ball(np.random.default_rng(m), 2, 100, 0.0, 1.0)
        assert np.allclose(evaluate_array(g, evaluate_array(f, x)), x)
        assert np.allclose(branch_inverse_array(f, evaluate_array(f, x))[0], x)


def test_K_O_examples():
    assert K_O_printed(MapFamily("planar-branched", 2, 0.5), (1.5, 0.0)) == pytest.approx(6.0)
    assert K_O_analytic(MapFamily("planar-branched", 8, 0.5), (1.5, 0.0)) == pytest.approx(6.0)
    assert K_O_analytic(MapFamily("planar-branched", 2, 0.5), (0.5, 0.0)) == 1.0
    assert K_O_printed(MapFamily("planar-branched", 2, 0.5), (1.0, 0.0)) == math.inf
    assert K_O_analytic(MapFamily("scaling", 5), (0.3, 0.1)) == 1.0
    assert K_O_numeric(MapFamily("scaling", 5), (0.3, 0.1)) == pytest.approx(1.0, abs=1e-6)
    assert K_O_numeric(MapFamily("planar-branched", 8, 0.5), (1.5, 0.0)) == pytest.approx(6.0, rel=1e-3)
    assert K_O_numeric(MapFamily("planar-branched", 2, 0.5), (0.3, 0.4)) == pytest.approx(1.0, rel=1e-3)
    assert K_O_analytic(MapFamily("spatial-branched", 2, 0.5, n=3), (0.3, 0.1, 0.2)) == pytest.approx(4.0)


@pytest.mark.parametrize("fmap", BRANCHED, ids=lambda f: f"{f.kind}-m{f.m}-a{f.alpha}")
def test_K_O_numeric_matches_closed_form(fmap):
    pts = well_conditioned_points(fmap, 100, np.random.default_rng(2))
    exact = K_O_analytic(fmap, pts)
    num = np.array([K_O_numeric(fmap, x) for x in pts])
    assert np.max(np.abs(num / exact - 1)) < 1e-3
    assert np.all(exact >= 1)


@pytest.mark.parametrize("fmap", [f for f in BRANCHED if f.m > 1], ids=lambda f: f"{f.kind}-m{f.m}-a{f.alpha}")
def test_printed_form_bounds_exact_outside_glue(fmap):
    x = sample_ball(np.random.default_rng(3), fmap.n, 300, fmap.glue_radius * 1.0001, 2.0)
    exact, printed = K_O_analytic(fmap, x), K_O_printed(fmap, x)
    assert np.all(exact <= printed * (1 + 1e-12))
    if fmap.kind == "planar-branched":
        assert np.allclose(exact, printed)


def test_K_O_numeric_refuses_singular_points():
    fmap = MapFamily("planar-branched", 2, 0.5)
    for x in ((1.0, 0.0), (fmap.glue_radius, 0.0), (0.0, 0.0), (2.0, 0.0)):
        with pytest.raises(ContractViolation):
            K_O_numeric(fmap, x)


@pytest.mark.parametrize("fmap", BRANCHED + [MapFamily("scaling", 1), MapFamily("scaling", 4, inverse=True)],
                         ids=lambda f: f"{f.kind}-m{f.m}-a{f.alpha}-inv{f.inverse}")
def test_K_I_sum_below_Q(fmap):
    Q = paired_q(fmap)
    w = sample_ball(np.random.default_rng(4), fmap.n, 1000, 1e-6, 1.0)
    for y in w:
        assert K_I_sum(fmap, y) <= q_eval(Q, y) * (1 + 1e-12)


def test_K_I_examples():
    fmap = MapFamily("planar-branched", 2, 0.5)
    w = np.array([0.25, 0.0])
    assert K_I_sum(fmap, w) <= 16.0
    edge = np.array([0.6, 0.8])
    val = K_I_sum(fmap, edge)
    assert math.isfinite(val) and val <= q_eval(paired_q(fmap), edge)
    assert K_I_sum(MapFamily("scaling", 3, inverse=True), (0.2, 0.3)) == 1.0
    with pytest.raises(BranchPointError):
        K_I_sum(fmap, (0.0, 0.0))


def _radial_quadrature(Q: QWeight, p: float = 1.0) -> float:
    f = lambda r: (Q.coefficient * r ** (-Q.exponent)) ** p * r ** (Q.n - 1)
    val, _ = integrate.quad(f, 0.0, Q.support_radius, limit=200, epsabs=0, epsrel=1e-10)
    return sphere_area(Q.n) * val


def test_q_norm_closed_form_vs_quadrature():
    Q = paired_q(MapFamily("planar-branched", 1, 0.5))
    assert q_norm(Q) == pytest.approx(8 * math.pi / 0.75, rel=1e-12)
    assert q_norm(Q) == pytest.approx(_radial_quadrature(Q), rel=1e-3)
    assert q_norm(paired_q(MapFamily("scaling", 2, inverse=True))) == pytest.approx(math.pi)
    for a in (0.2, 0.4):
        Q3 = paired_q(MapFamily("spatial-branched", 1, a, n=3))
        assert q_norm(Q3) == pytest.approx(_radial_quadrature(Q3), rel=1e-6)
        assert q_norm(Q3, p=2) == pytest.approx(_radial_quadrature(Q3, 2), rel=1e-6)


def test_q_norm_divergence():
    Q = paired_q(MapFamily("planar-branched", 1, 0.5))
    with pytest.raises(DivergentIntegralError):
        q_norm(Q, p=2 / 0.5)
    with pytest.raises(DivergentIntegralError):
        q_norm(paired_q(MapFamily("scaling", 2)))
    assert q_norm(Q, p=4, shell=(0.1, 1.0)) > 0


def test_q_eval_support():
    Q = paired_q(MapFamily("planar-branched", 1, 0.5))
    assert q_eval(Q, (0.25, 0.0)) == pytest.approx(16.0)
    assert q_eval(Q, (1.5, 0.0)) == 0.0
    assert q_eval(Q, (0.0, 0.0)) == math.inf


def test_sample_table_and_csv():
    fmap = MapFamily("planar-branched", 2, 0.5)
    rows = sample_table(fmap, 100, seed=0)
    assert len(rows) == 100
    assert max(abs(r["K_O_numeric"] / r["K_O_analytic"] - 1) for r in rows) < 1e-3
    text = table_csv(fmap, rows)
    parsed = list(csv.reader(io.StringIO(text)))
    assert parsed[0] == ["x1", "x2", "f1", "f2", "K_O_analytic", "K_O_numeric", "Q_f_x"]
    assert len(parsed) == 101
    assert table_csv(fmap, sample_table(fmap, 0)) == ",".join(parsed[0]) + "\n"
    ident = MapFamily("scaling", 1)
    for r in sample_table(ident, 10, seed=1):
        assert r["x"] == r["f_x"] and r["K_O_analytic"] == 1.0
    assert sample_table(fmap, 20, seed=5) == sample_table(fmap, 20, seed=5)
