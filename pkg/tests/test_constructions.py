from __future__ import annotations

import math

import numpy as np
import pytest

from avgdist.constructions import (
    CornerParams,
    Scene,
    circle_radius,
    corner_domain,
    corner_nonstationary_test,
    gamma_function,
    gamma_threshold,
    h_of_phi,
    h_of_phi_closed,
    rect_height_lhs,
    rect_height_quadrature,
    solve_rect_height,
    stadium_domain,
    stationary_circle,
    wedge_set,
)
from avgdist.errors import DegenerateConstructionError, SolverError, ValidationError
from avgdist.geometry import polyline
from avgdist.measure import Disk, contains, discretize_region


@pytest.mark.parametrize("lam, r", [(0.3, 0.44721), (0.125, 0.61237)])
def test_circle_radius(lam, r):
    assert circle_radius(lam) == pytest.approx(r, abs=5e-6)
    assert stationary_circle(lam).graph.n_vertices == 512


@pytest.mark.parametrize("lam", [0.5, 0.7, 0.0, -0.1])
def test_circle_degenerate(lam):
    with pytest.raises(DegenerateConstructionError):
        stationary_circle(lam)


def test_stadium_geometry():
    s = stadium_domain(0.25, 2.0)
    assert s.params["cap_radius"] == pytest.approx(0.5)
    assert s.params["area"] == pytest.approx(2.78540, abs=1e-5)
    assert discretize_region(s.region, 0.005).total_mass == pytest.approx(2.78540, rel=5e-3)
    with pytest.raises((ValidationError, DegenerateConstructionError)):
        stadium_domain(0.0, 2.0)


def test_wedge_geometry():
    w = wedge_set(math.pi / 3)
    apex = w.params["apex"]
    assert np.allclose(w.graph.vertices[apex], 0)
    d1 = w.graph.vertices[apex - 1] / np.hypot(*w.graph.vertices[apex - 1])
    d2 = w.graph.vertices[apex + 1] / np.hypot(*w.graph.vertices[apex + 1])
    bis = np.array([0.0, 1.0])
    assert math.degrees(math.acos(d1 @ bis)) == pytest.approx(60)
    assert math.degrees(math.acos(d2 @ bis)) == pytest.approx(60)
    with pytest.raises(ValidationError):
        wedge_set(math.pi / 2)


def test_scene_containment():
    with pytest.raises(ValidationError):
        Scene(polyline([[0, 0], [2, 0]]), Disk((0, 0), 1.0), 0.1, "test")


def test_rect_height():
    h = solve_rect_height(0.5, 0.125)
    assert h == pytest.approx(0.2572536, abs=1e-7)
    assert rect_height_lhs(0.5, h) == pytest.approx(0.125, abs=1e-12)
    assert rect_height_quadrature(0.5, h) == pytest.approx(0.125, rel=1e-6)
    hs = [solve_rect_height(0.5, lam) for lam in (0.1, 0.01, 0.001, 1e-4)]
    assert all(b < a for a, b in zip(hs, hs[1:])) and hs[-1] < 0.01


def test_rect_height_no_bracket():
    with pytest.raises((SolverError, ValidationError)):
        solve_rect_height(0.5, -1.0)


def test_corner_constants():
    p = CornerParams(0.125, 1.0, math.pi / 6)
    assert p.b == pytest.approx(math.sqrt(1.25) - 1, abs=1e-15)
    assert p.r == pytest.approx(0.5)
    assert float(p.f(0.0)) == pytest.approx(math.sqrt(1.5), abs=1e-12)
    assert float(p.f(p.alpha)) == pytest.approx(p.R + p.b, abs=1e-12)
    with pytest.raises(ValidationError):
        CornerParams(0.125, 1.0, math.pi / 6, k=1.0)
    with pytest.raises(ValidationError):
        CornerParams(0.125, 1.0, 2.0)


def test_corner_scene_pieces():
    s = corner_domain(CornerParams(0.125), n_arc=128)
    h = 0.01
    union_mass = discretize_region(s.region, h).total_mass
    parts = sum(discretize_region(r, h).total_mass for r in s.pieces.values())
    assert set(s.pieces) == set("ABCDEFG")
    assert abs(parts - union_mass) < 5e-3 * union_mass
    coarse = discretize_region(s.region, 0.02).total_mass
    assert union_mass == pytest.approx(coarse, rel=2e-2)
    assert all(contains(s.region, v) for v in s.graph.vertices)


@pytest.mark.parametrize("phi, value", [(math.pi / 4, 1.29559), (0.1, 1.00335), (1.2, 2.41040)])
def test_h_of_phi(phi, value):
    assert h_of_phi(phi) == pytest.approx(value, abs=2e-5)


def test_h_of_phi_small_angle():
    phi = 1e-3
    assert h_of_phi(phi) == pytest.approx(1 + phi * phi / 3, abs=1e-9)
    with pytest.raises(ValidationError):
        h_of_phi(0.0)
    with pytest.raises(ValidationError):
        h_of_phi(math.pi / 2)


def test_h_of_phi_grid():
    for phi in np.linspace(0.01, 1.5, 100):
        assert abs(h_of_phi(float(phi), check=False) - float(h_of_phi_closed(phi))) <= 1e-10


def test_nonstationary_test():
    t = corner_nonstationary_test(0.125, 1.0, 1.0, math.pi / 4)
    assert t.ratio == pytest.approx(17.944, abs=1e-3)
    assert t.verdict == "non-stationary"
    small = corner_nonstationary_test(0.125, 1e-6, 1e-6, math.pi / 4)
    assert 1 < small.ratio < 1.0001


def test_gamma_profile():
    rep = gamma_threshold(1e-3)
    assert len(rep.gamma) == len(rep.values) > 1500
    assert rep.roots == [] and "no interior root" in rep.note
    assert rep.value_at_expected == pytest.approx(0.419, abs=1e-3)
    assert rep.quadrature_check < 1e-10
    assert abs(float(gamma_function(1e-6))) < 1e-10
    d = rep.as_dict()
    assert d["all_positive"] and d["n_samples"] == len(rep.gamma)
