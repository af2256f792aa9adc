from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avgdist.constructions import stadium_domain, stationary_circle, wedge_set
from avgdist.errors import TopologyError, ValidationError
from avgdist.geometry import EmbeddedGraph, graph_length, polyline, regular_polygon
from avgdist.measure import Disk, QuadratureMeasure, Rectangle, discretize_region, from_points
from avgdist.variation import (
    AtomicMeasureWarning,
    OnSigmaField,
    average_distance,
    curvature_atoms,
    curvature_pairing,
    cut_loop,
    extrapolate_sqrt,
    fd_variation_oracle,
    first_variation,
    functional_value,
    length_rate,
    loop_cut_probe,
    shape_gradient,
    slope_probe,
    stationarity_residual,
    stationarity_tolerance,
)


@pytest.fixture(scope="module")
def disk_mu():
    return discretize_region(Disk((0, 0), 1.0), 0.01)


def segment():
    return polyline([[0.0, 0.0], [1.0, 0.0]])


def test_atoms_collinear_and_endpoint():
    g = polyline([[0, 0], [0.5, 0], [1.0, 0]])
    a = curvature_atoms(g)
    assert np.allclose(a[1], 0, atol=1e-12)
    assert np.hypot(*a[0]) == pytest.approx(1.0) and np.hypot(*a[2]) == pytest.approx(1.0)


def test_pairing_examples():
    g = segment()
    assert curvature_pairing(g, OnSigmaField.constant(g, (1, 0))) == pytest.approx(0.0, abs=1e-15)
    X = OnSigmaField.at_vertex(g, 1, (1, 0))
    assert curvature_pairing(g, X) == pytest.approx(-1.0)
    assert length_rate(g, X) == pytest.approx(1.0)
    assert curvature_pairing(g, OnSigmaField.zeros(g)) == 0.0


@pytest.mark.parametrize("phi", [0.2, math.pi / 6, 1.0])
def test_v_graph_atom(phi):
    # arms leave O at angle phi below the horizontal
    O = np.array([0.0, 0.0])
    g = polyline([O + (-math.cos(phi), -math.sin(phi)), O, O + (math.cos(phi), -math.sin(phi))])
    X = OnSigmaField.at_vertex(g, 1, (0, 1))
    assert curvature_pairing(g, X) == pytest.approx(-2 * math.sin(phi), abs=1e-14)
    # measured from the bisector instead, the same atom reads 2 cos(phi)
    w = wedge_set(phi, n_arm=4).graph
    Xw = OnSigmaField.at_vertex(w, 4, (0, 1))
    assert curvature_pairing(w, Xw) == pytest.approx(2 * math.cos(phi), abs=1e-12)


@pytest.mark.parametrize("r", [0.3, 0.8])
def test_circle_pairing(r):
    g = regular_polygon((0, 0), r, 512)
    assert curvature_pairing(g, OnSigmaField.radial(g)) == pytest.approx(-2 * math.pi, rel=1e-3)


@given(st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=25, deadline=None)
def test_constant_field_telescopes(cx, cy):
    g = EmbeddedGraph(np.array([[0, 0], [1, 0.2], [0.4, 1], [-0.5, 0.3]]), [(0, 1), (1, 2), (0, 3), (0, 2)])
    assert curvature_pairing(g, OnSigmaField.constant(g, (cx, cy))) == pytest.approx(0.0, abs=1e-12)


def test_average_distance_examples():
    mu = discretize_region(Disk((0, 0), 1), 0.005)
    r = 0.5
    g = regular_polygon((0, 0), r, 512)
    assert average_distance(g, mu) == pytest.approx(2 * math.pi * (1 / 3 - r / 2 + r**3 / 3), rel=5e-3)
    assert average_distance(segment(), from_points([((1, 1), 1.0)])) == pytest.approx(1.0)
    tri = polyline([[0, 0], [1, 0], [1, 1]])
    on = from_points([((0, 0), 1.0), ((1, 0), 2.0), ((1, 1), 1.0)])
    assert average_distance(tri, on) == 0.0


def test_functional_value_examples():
    assert functional_value(segment(), from_points([((2, 0), 1.0)]), 0.5) == pytest.approx(1.5)
    g = polyline([[0, 0], [3, 0]])
    assert functional_value(g, from_points([((1, 0), 1.0)]), 0.2) == pytest.approx(0.6)
    mu = discretize_region(Disk((0, 0), 1), 0.005)
    r = math.sqrt(0.2)
    F = functional_value(regular_polygon((0, 0), r, 512), mu, 0.3)
    assert F == pytest.approx(2 * math.pi * (1 / 3 - r / 2 + r**3 / 3 + 0.3 * r), rel=5e-3)
    with pytest.raises(ValidationError):
        functional_value(segment(), mu, -0.1)


def test_first_variation_hand_example():
    g = segment()
    mu = from_points([((2, 0), 1.0)])
    rep = first_variation(g, mu, 0.3, OnSigmaField.at_vertex(g, 1, (1, 0)))
    assert rep.integral_term == pytest.approx(-1.0)
    assert rep.curvature_term == pytest.approx(-1.0)
    assert rep.total == pytest.approx(-0.7)
    grad = shape_gradient(g, mu, 0.3)
    assert grad[1, 0] == pytest.approx(-0.7)


def test_first_variation_field_size_mismatch():
    g = segment()
    with pytest.raises(ValidationError):
        first_variation(g, from_points([((2, 0), 1.0)]), 0.3, OnSigmaField(np.zeros((3, 2))))


def test_circle_law(disk_mu):
    for r, lam in [(0.45, 0.1), (0.6, 0.3), (0.3, 0.1)]:
        g = regular_polygon((0, 0), r, 512)
        val = first_variation(g, disk_mu, lam, OnSigmaField.radial(g)).total
        assert val == pytest.approx(2 * math.pi * (r * r - 0.5 + lam), rel=1e-2)


def test_linearity(disk_mu):
    g = regular_polygon((0, 0), 0.5, 64)
    rng = np.random.default_rng(1)
    X, Y = OnSigmaField(rng.normal(size=(64, 2))), OnSigmaField(rng.normal(size=(64, 2)))
    a, b = 0.7, -1.3
    lhs = first_variation(g, disk_mu, 0.2, a * X + b * Y).total
    rhs = a * first_variation(g, disk_mu, 0.2, X).total + b * first_variation(g, disk_mu, 0.2, Y).total
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_translation_equivariance():
    g = polyline([[-0.5, 0.1], [0.0, -0.2], [0.6, 0.3]])
    mu = discretize_region(Rectangle((-1, -1), (1, 1)), 0.05)
    X = OnSigmaField(np.array([[0.3, 1.0], [-0.2, 0.5], [1.0, 0.0]]))
    shift = np.array([3.0, -2.0])
    a = first_variation(g, mu, 0.25, X)
    b = first_variation(g.moved(np.tile(shift, (3, 1))), mu.translated(shift), 0.25, X)
    assert a.total == pytest.approx(b.total, abs=1e-9)
    assert a.integral_term == pytest.approx(b.integral_term, abs=1e-9)


def test_fd_oracle_agreement():
    g = polyline([[-0.6, 0.0], [-0.2, 0.15], [0.2, -0.1], [0.6, 0.05]])
    mu = discretize_region(Rectangle((-1, -1), (1, 1)), 0.02)
    X = OnSigmaField.from_function(g, lambda p: np.column_stack([np.sin(3 * p[:, 1] + 1), p[:, 0] ** 2 + 0.3]))
    fd = fd_variation_oracle(g, mu, 0.2, X, 1e-6)
    an = first_variation(g, mu.subset(fd.kept), 0.2, X).total
    assert fd.value == pytest.approx(an, rel=1e-5)
    assert 0 < fd.excluded_mass < 0.1 * mu.total_mass


def test_stationarity_verdicts():
    st_scene = stadium_domain(0.25, 2.0)
    rep = stationarity_residual(st_scene.graph, st_scene.measure(0.005), 0.25, n_arc=st_scene.n_arc)
    assert rep.verdict == "stationary"
    w = wedge_set(math.pi / 3)
    rep = stationarity_residual(w.graph, w.measure(0.01), w.lam, n_arc=w.n_arc)
    assert rep.verdict == "non-stationary"
    c = stationary_circle(0.3, 256)
    rep = stationarity_residual(c.graph, c.measure(0.01), 0.3, n_arc=256)
    assert rep.verdict == "stationary"


def test_stationarity_custom_basis(disk_mu):
    g = regular_polygon((0, 0), math.sqrt(0.2), 256)
    rep = stationarity_residual(g, disk_mu, 0.3, basis=[("radial", OnSigmaField.radial(g))], n_arc=256)
    assert rep.basis_residuals[0][0] == "radial"
    assert rep.residual_norm < 1e-2 and rep.verdict == "stationary"
    with pytest.raises(ValidationError):
        stationarity_residual(g, disk_mu, 0.3, basis=[OnSigmaField.zeros(g)])


def test_atomic_measure_inconclusive():
    with pytest.warns(AtomicMeasureWarning):
        rep = stationarity_residual(segment(), from_points([((2, 0), 1.0)]), 0.3)
    assert rep.verdict == "inconclusive"


def test_tolerance_formula():
    assert stationarity_tolerance(0.01, 512) == pytest.approx(0.5 * (0.01 + 1 / 512))


def test_slope_empty_measure_exact():
    g = polyline([[-1, 0], [0, 0], [1, 0]])
    sp = slope_probe(g, QuadratureMeasure.empty(), 0.37, (0, 0), (0, 1), [0.1, 0.01, 0.001])
    assert np.all(sp.ratios == 0.37)


def test_slope_rejects_bad_spike():
    g = polyline([[-1, 0], [0, 0], [1, 0]])
    with pytest.raises(ValidationError):
        slope_probe(g, None, 0.3, (0, 0), (1, 0.05), [0.1, 0.05])
    with pytest.raises(ValidationError):
        slope_probe(g, None, 0.3, (0, 0), (0, 1), [0.05, 0.1])


def test_extrapolation_recovers_model():
    eps = np.array([0.1, 0.05, 0.025])
    vals = 0.3 - 1.2 * np.sqrt(eps) + 0.7 * eps**1.5
    assert extrapolate_sqrt(eps, vals) == pytest.approx(0.3, abs=1e-12)


def test_loop_cut(disk_mu):
    c = stationary_circle(0.3, 256)
    cut = cut_loop(c.graph, 0, 0.05)
    assert cut.removed_length == pytest.approx(0.05, rel=1e-3)
    assert graph_length(cut.graph) < graph_length(c.graph)
    lp = loop_cut_probe(c.graph, disk_mu, 0.3, 0, [0.05, 0.02])
    assert np.all(lp.delta_F < 0)
    assert lp.delta_F[-1] / lp.eps[-1] == pytest.approx(-0.3, rel=0.1)


def test_loop_cut_needs_cycle():
    with pytest.raises(TopologyError):
        cut_loop(polyline([[0, 0], [1, 0], [2, 0]]), 1, 0.1)
