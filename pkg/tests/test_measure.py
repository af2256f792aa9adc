from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avgdist.errors import DegenerateMeasureError, ValidationError
from avgdist.measure import (
    AnnularSector,
    Difference,
    Disk,
    Polygon,
    QuadratureMeasure,
    Rectangle,
    Union,
    contains,
    discretize_region,
    from_points,
)


def test_contains_examples():
    assert contains(Disk((0, 0), 1), (0.5, 0))
    assert not contains(Difference(Disk((0, 0), 1), Disk((0, 0), 0.5)), (0.25, 0))
    c = math.cos(math.pi / 4)
    assert contains(AnnularSector((0, 0), 1, 2, 0, math.pi / 2), (1.5 * c, 1.5 * c))


def test_disk_mass():
    mu = discretize_region(Disk((0, 0), 1), 0.01)
    assert mu.total_mass == pytest.approx(math.pi, rel=5e-3)


def test_rectangle_exact_tiling():
    mu = discretize_region(Rectangle((0, 0), (2, 1)), 0.1)
    assert len(mu) == 200
    assert mu.total_mass == pytest.approx(2.0, abs=1e-12)


def test_union_additivity():
    a, b = Rectangle((0, 0), (1, 1)), Rectangle((2, 0), (3, 1))
    mu = discretize_region(Union((a, b)), 0.05)
    assert mu.total_mass == pytest.approx(2.0, abs=1e-12)


def test_disk_refinement_order():
    errs = [abs(discretize_region(Disk((0, 0), 1), h).total_mass - math.pi) for h in (0.04, 0.02, 0.01)]
    # midpoint rule on a curved boundary: no worse than first order
    assert errs[-1] <= errs[0] / 2


def test_row_major_deterministic():
    a = discretize_region(Disk((0.1, 0.2), 0.7), 0.03)
    b = discretize_region(Disk((0.1, 0.2), 0.7), 0.03)
    assert np.array_equal(a.points, b.points)
    order = np.lexsort((a.points[:, 0], a.points[:, 1]))
    assert np.array_equal(order, np.arange(len(a)))


def test_empty_discretization():
    with pytest.raises(DegenerateMeasureError):
        discretize_region(Disk((0, 0), 0.01), 0.5)


def test_from_points():
    assert from_points([((3, 4), 1.0)]).total_mass == 1.0
    assert from_points([((0, 0), 2.0), ((1, 1), 3.0)]).total_mass == 5.0
    with pytest.raises(DegenerateMeasureError):
        from_points([])
    with pytest.raises(ValidationError):
        from_points([((0, 0), 0.0)])


@pytest.mark.parametrize(
    "factory",
    [
        lambda: Disk((0, 0), 0.0),
        lambda: Rectangle((0, 0), (0, 1)),
        lambda: Polygon(((0, 0), (1, 0), (0, 1), (1, 1))),
        lambda: AnnularSector((0, 0), 1.0, 0.5, 0, 1),
    ],
)
def test_invalid_regions(factory):
    with pytest.raises(ValidationError):
        factory()


def test_polygon_must_be_counter_clockwise():
    assert Polygon(((0, 0), (1, 0), (1, 1), (0, 1))).area() == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        Polygon(((0, 0), (0, 1), (1, 1), (1, 0)))


@settings(max_examples=30, deadline=None)
@given(x=st.floats(-1, 1), y=st.floats(-1, 1))
def test_difference_is_set_difference(x, y):
    big, small = Disk((0, 0), 0.9), Rectangle((-0.3, -0.3), (0.3, 0.3))
    d = Difference(big, small)
    assert contains(d, (x, y)) == (contains(big, (x, y)) and not contains(small, (x, y)))


def test_subset_and_translate():
    mu = QuadratureMeasure(np.array([[0, 0], [1, 0]], float), np.array([1.0, 2.0]))
    assert mu.subset(np.array([False, True])).total_mass == 2.0
    assert np.allclose(mu.translated((1, 1)).points, [[1, 1], [2, 1]])
