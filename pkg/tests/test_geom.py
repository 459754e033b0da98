from __future__ import annotations

import math

import numpy as np
import pytest

from modlab.errors import ContractViolation
from modlab.geom import (
    INFINITY, Annulus, Ball, Box, PointSet, Sphere, annulus_contains, as_point, chordal_distance,
    chordal_distances, hausdorff_chordal_diameter, regions_intersect, sphere_directions,
)
from modlab.grid import Grid


def test_chordal_examples():
    assert chordal_distance((0.0, 0.0), INFINITY) == pytest.approx(1.0)
    assert chordal_distance((0.3, -2.0), (0.3, -2.0)) == 0.0
    assert chordal_distance((1.0, 0.0), (0.0, 1.0)) == pytest.approx(math.sqrt(2) / 2, abs=1e-12)
    assert chordal_distance(INFINITY, INFINITY) == 0.0


def test_chordal_matches_stereographic_projection():
    rng = np.random.default_rng(0)

    def project(x):
        # stereographic projection onto the sphere of diameter 1 tangent at the origin
        s = x @ x
        return np.append(x, s) / (1 + s)

    for _ in range(50):
        x, y = rng.normal(size=3) * 3, rng.normal(size=3) * 3
        assert chordal_distance(x, y) == pytest.approx(np.linalg.norm(project(x) - project(y)), abs=1e-12)


def test_chordal_is_symmetric_and_bounded():
    rng = np.random.default_rng(1)
    pts = rng.normal(size=(40, 2)) * 10
    for a in pts:
        d = chordal_distances(pts, a)
        assert np.all(d <= 1 + 1e-12)
        for b, dab in zip(pts, d):
            assert dab == pytest.approx(chordal_distance(b, a), abs=1e-14)


def test_chordal_rejects_bad_points():
    with pytest.raises(ContractViolation):
        chordal_distance((0.0, 0.0), (1.0, 0.0, 0.0))
    with pytest.raises(ContractViolation):
        as_point((np.nan, 0.0))
    with pytest.raises(ContractViolation):
        as_point((1.0,))


def test_annulus_membership():
    a = Annulus((0.0, 0.0), 1.0, 2.0)
    assert annulus_contains(a, (1.5, 0.0))
    assert not annulus_contains(a, (1.0, 0.0))
    assert not annulus_contains(a, INFINITY)
    with pytest.raises(ContractViolation):
        Annulus((0.0, 0.0), 2.0, 1.0)


def test_chordal_diameter():
    assert hausdorff_chordal_diameter([(0.2, 0.1)]) == 0.0
    assert hausdorff_chordal_diameter([(0.0, 0.0), INFINITY]) == pytest.approx(1.0)
    assert hausdorff_chordal_diameter([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]) == pytest.approx(0.70710678, abs=1e-8)
    with pytest.raises(ContractViolation):
        hausdorff_chordal_diameter([])


def test_regions_intersect():
    assert not regions_intersect(Sphere((0.0, 0.0), 1.0), Sphere((0.0, 0.0), 2.0))
    assert regions_intersect(Sphere((0.0, 0.0), 1.0), Sphere((1.0, 0.0), 1.0))
    assert regions_intersect(Box((0.0, 0.0), (1.0, 1.0)), Box((1.0, 0.0), (2.0, 1.0)))
    assert not regions_intersect(Box((0.0, 0.0), (1.0, 1.0)), Box((1.5, 0.0), (2.0, 1.0)))
    assert regions_intersect(PointSet(np.array([[1.0, 0.0]])), Sphere((0.0, 0.0), 1.0))
    assert not regions_intersect(Ball((0.0, 0.0), 0.5), Sphere((0.0, 0.0), 1.0))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_sphere_directions_unit(n):
    d = sphere_directions(n, 37)
    assert d.shape == (37, n)
    assert np.allclose(np.linalg.norm(d, axis=1), 1.0)
    assert np.allclose(sphere_directions(n, 37), d)


def test_grid_geometry():
    g = Grid((0.0, 0.0), (2.0, 1.0), (8, 4))
    assert g.size == 32
    assert np.allclose(g.side, 0.25)
    assert g.cell_volume == pytest.approx(0.0625)
    assert g.centers.shape == (32, 2)
    assert np.allclose(g.centers[0], (0.125, 0.125))
    assert g.coarsen().shape == (4, 2)
    # a point on a shared face belongs to the higher cell
    assert tuple(g.cell_coords(np.array([[0.25, 0.1]]))[0]) == (1, 0)
    with pytest.raises(ContractViolation):
        Grid((0.0, 0.0), (1.0, 1.0), (0, 2))
