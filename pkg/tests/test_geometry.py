from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avgdist.errors import ValidationError
from avgdist.geometry import (
    EmbeddedGraph,
    arc_polyline,
    graph_length,
    locate_on_graph,
    polyline,
    project,
    project_points,
    regular_polygon,
    rotation,
    segment_distance,
)


def unit_segment():
    return polyline([[0.0, 0.0], [1.0, 0.0]])


def test_endpoint_projection():
    r = project((2.0, 0.0), unit_segment())
    assert np.allclose(r.foot, (1, 0)) and r.distance == pytest.approx(1.0)
    assert np.allclose(r.direction, (-1, 0)) and r.multiplicity == 1


def test_perpendicular_foot():
    r = project((0.3, 0.4), unit_segment())
    assert np.allclose(r.foot, (0.3, 0)) and r.distance == pytest.approx(0.4)
    assert np.allclose(r.direction, (0, -1))


def test_two_equidistant_feet():
    g = EmbeddedGraph(np.array([[0, 0], [1, 1], [1, -1]], float), [(0, 1), (0, 2)])
    r = project((1.0, 0.0), g)
    assert r.distance == pytest.approx(1 / math.sqrt(2), abs=1e-12)
    assert r.multiplicity == 2
    detail = project_points([[1.0, 0.0]], g, detail=True)
    feet = sorted([tuple(np.round(detail.foot[0], 12)), tuple(np.round(detail.second_foot[0], 12))])
    assert np.allclose(feet, [(0.5, -0.5), (0.5, 0.5)])
    # brute force over densely sampled points of the graph
    t = np.linspace(0, 1, 200001)
    pts = np.vstack([np.column_stack([t, t]), np.column_stack([t, -t])])
    d = np.hypot(pts[:, 0] - 1, pts[:, 1])
    close = pts[d < d.min() + 1e-9]
    assert {np.sign(y) for y in close[:, 1]} == {-1.0, 1.0}


@pytest.mark.parametrize(
    "g, expected",
    [
        (EmbeddedGraph(np.array([[0, 0], [1, 0], [0, 1]], float), [(0, 1), (1, 2), (2, 0)]), 2 + math.sqrt(2)),
        (polyline([[0, 0], [3, 4]]), 5.0),
        (regular_polygon((0, 0), 1.0, 64), 128 * math.sin(math.pi / 64)),
    ],
)
def test_graph_length(g, expected):
    assert graph_length(g) == pytest.approx(expected, rel=1e-12)


def test_arc_polyline_chords():
    pts = arc_polyline((0, 0), 1.0, 0.0, math.pi / 2, 2)
    assert graph_length(polyline(pts)) == pytest.approx(4 * math.sin(math.pi / 8), rel=1e-12)
    assert graph_length(polyline(pts)) == pytest.approx(1.53073, abs=1e-5)
    one = arc_polyline((0, 0), 1.0, 0.0, math.pi / 2, 1)
    assert one.shape == (2, 2) and np.allclose(one, [[1, 0], [0, 1]])


@pytest.mark.parametrize("n, r", [(0, 1.0), (4, 0.0), (4, -1.0)])
def test_arc_polyline_rejects(n, r):
    with pytest.raises(ValidationError):
        arc_polyline((0, 0), r, 0.0, 1.0, n)


def test_arc_length_convergence():
    span, R = 2.0, 1.5
    prev = 0.0
    for n in (2, 4, 8, 16, 32, 64):
        L = graph_length(polyline(arc_polyline((0, 0), R, 0.0, span, n)))
        assert L > prev
        assert R * span - L <= span**3 / 24 * R / n**2 + 1e-15
        prev = L


@pytest.mark.parametrize(
    "verts, edges",
    [
        ([[0, 0], [1, 0]], [(0, 2)]),
        ([[0, 0], [1, 0]], [(0, 0)]),
        ([[0, 0], [0, 0]], [(0, 1)]),
        ([[0, 0], [1, 0], [5, 5], [6, 5]], [(0, 1), (2, 3)]),
        ([[0, 0], [np.nan, 0]], [(0, 1)]),
    ],
)
def test_invalid_graphs(verts, edges):
    with pytest.raises(ValidationError):
        EmbeddedGraph(np.array(verts, float), edges)


def test_projection_requires_edges():
    with pytest.raises(ValidationError):
        project_points([[0, 0]], EmbeddedGraph.empty())


def test_locate_on_graph():
    e, t = locate_on_graph((0.25, 0.0), polyline([[0, 0], [0.5, 0], [1, 0]]))
    assert e == 0 and t == pytest.approx(0.5)


def _random_graph(rng, n_edges):
    n = n_edges + 1
    pts = rng.uniform(-1, 1, (n, 2))
    edges = [(i, int(rng.integers(0, i))) for i in range(1, n)]
    return EmbeddedGraph(pts, edges)


def test_brute_force_distance():
    rng = np.random.default_rng(0)
    for _ in range(10):
        g = _random_graph(rng, int(rng.integers(1, 21)))
        pts = rng.uniform(-2, 2, (1000, 2))
        d = project_points(pts, g).distance
        brute = np.min([segment_distance(pts, g.vertices[a], g.vertices[b]) for a, b in g.edges], axis=0)
        assert np.allclose(d, brute, rtol=1e-12, atol=0)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    angle=st.floats(-math.pi, math.pi),
    sx=st.floats(-5, 5),
    sy=st.floats(-5, 5),
)
def test_rigid_equivariance(seed, angle, sx, sy):
    rng = np.random.default_rng(seed)
    g = _random_graph(rng, 6)
    pts = rng.uniform(-2, 2, (50, 2))
    Q = rotation(angle)
    shift = np.array([sx, sy])
    a = project_points(pts, g)
    b = project_points(pts @ Q.T + shift, g.transformed(Q, shift))
    assert np.allclose(a.foot @ Q.T + shift, b.foot, atol=1e-9)
    assert np.allclose(a.distance, b.distance, atol=1e-9)


def test_tie_break_is_lexicographic():
    g = EmbeddedGraph(np.array([[0, 0], [1, 1], [1, -1]], float), [(0, 1), (0, 2)])
    pr = project_points([[1.0, 0.0]], g)
    assert pr.edge_id[0] == 0


def test_split_edge_preserves_shape():
    g = unit_segment()
    g2, v = g.split_edge(0, 0.25)
    assert g2.n_edges == 2 and np.allclose(g2.vertices[v], (0.25, 0))
    assert graph_length(g2) == pytest.approx(1.0)
