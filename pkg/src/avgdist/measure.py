"""Regions and their discretisation into quadrature measures.

Regions are small immutable dataclasses with a vectorised ``contains`` and a
bounding box.  Boundaries count as inside.  ``discretize_region`` is a plain
midpoint rule on an axis-aligned grid anchored at the lower-left corner of the
bounding box, so results are deterministic and ordered row-major (y outer).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateMeasureError, ValidationError
from .geometry import as_points

TWO_PI = 2.0 * math.pi
# slack for boundary membership, relative to the region size
_BOUNDARY_REL = 1e-12


class Region:
    """Base class; subclasses implement ``contains_points`` and ``bbox``."""

    def contains_points(self, pts: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def bbox(self) -> tuple[float, float, float, float]:  # pragma: no cover - abstract
        raise NotImplementedError

    def boundary_paths(self) -> list[np.ndarray]:
        """Closed outlines used for drawing."""
        return []

    def __or__(self, other: "Region") -> "Union":
        return Union([self, other])

    def __sub__(self, other: "Region") -> "Difference":
        return Difference(self, other)


def _scale(bb) -> float:
    return max(bb[2] - bb[0], bb[3] - bb[1], 1.0)


def _angle_in(theta: np.ndarray, start: float, end: float, slack: float) -> np.ndarray:
    """theta in the CCW range [start, end]; end - start may be up to 2*pi."""
    span = end - start
    if span >= TWO_PI - slack:
        return np.ones(theta.shape, dtype=bool)
    rel = np.mod(theta - start, TWO_PI)
    return (rel <= span + slack) | (rel >= TWO_PI - slack)


@dataclass(frozen=True)
class Disk(Region):
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValidationError(f"disk radius must be positive, got {self.radius}")

    def contains_points(self, pts):
        c = np.asarray(self.center, float)
        d = np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1])
        return d <= self.radius * (1 + _BOUNDARY_REL)

    def bbox(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cy - r, cx + r, cy + r)

    def area(self) -> float:
        return math.pi * self.radius**2

    def boundary_paths(self):
        t = np.linspace(0, TWO_PI, 257)
        c = np.asarray(self.center, float)
        return [c + self.radius * np.column_stack([np.cos(t), np.sin(t)])]


@dataclass(frozen=True)
class Rectangle(Region):
    corner_min: tuple[float, float]
    corner_max: tuple[float, float]

    def __post_init__(self):
        (x0, y0), (x1, y1) = self.corner_min, self.corner_max
        if not (x1 > x0 and y1 > y0):
            raise ValidationError(f"rectangle {self.corner_min}-{self.corner_max} has no area")

    def contains_points(self, pts):
        (x0, y0), (x1, y1) = self.corner_min, self.corner_max
        tol = _BOUNDARY_REL * _scale(self.bbox())
        return ((pts[:, 0] >= x0 - tol) & (pts[:, 0] <= x1 + tol)
                & (pts[:, 1] >= y0 - tol) & (pts[:, 1] <= y1 + tol))

    def bbox(self):
        (x0, y0), (x1, y1) = self.corner_min, self.corner_max
        return (x0, y0, x1, y1)

    def area(self) -> float:
        (x0, y0), (x1, y1) = self.corner_min, self.corner_max
        return (x1 - x0) * (y1 - y0)

    def boundary_paths(self):
        (x0, y0), (x1, y1) = self.corner_min, self.corner_max
        return [np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)], float)]


@dataclass(frozen=True)
class Polygon(Region):
    """Simple polygon given by its vertices in counter-clockwise order."""

    vertices: tuple

    def __post_init__(self):
        v = as_points(self.vertices)
        if len(v) < 3:
            raise ValidationError("polygon needs at least 3 vertices")
        object.__setattr__(self, "vertices", tuple(map(tuple, v.tolist())))
        if self.signed_area() <= 0:
            raise ValidationError("polygon vertices must be counter-clockwise with positive area")
        if not _is_simple(v):
            raise ValidationError("polygon is not simple")

    def signed_area(self) -> float:
        v = np.asarray(self.vertices)
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    def area(self) -> float:
        return self.signed_area()

    def contains_points(self, pts):
        v = np.asarray(self.vertices)
        w = np.roll(v, -1, axis=0)
        x, y = pts[:, :1], pts[:, 1:]
        # even-odd crossing test
        cond = (v[:, 1] > y) != (w[:, 1] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = v[:, 0] + (y - v[:, 1]) * (w[:, 0] - v[:, 0]) / (w[:, 1] - v[:, 1])
        inside = np.count_nonzero(cond & (x < xint), axis=1) % 2 == 1
        # boundary points
        d = w - v
        tol = _BOUNDARY_REL * _scale(self.bbox())
        t = np.clip(((x - v[:, 0]) * d[:, 0] + (y - v[:, 1]) * d[:, 1]) / np.sum(d * d, axis=1), 0, 1)
        dist = np.hypot(v[:, 0] + t * d[:, 0] - x, v[:, 1] + t * d[:, 1] - y).min(axis=1)
        return inside | (dist <= tol)

    def bbox(self):
        v = np.asarray(self.vertices)
        return (*v.min(axis=0), *v.max(axis=0))

    def boundary_paths(self):
        v = np.asarray(self.vertices)
        return [np.vstack([v, v[:1]])]


def _is_simple(v: np.ndarray) -> bool:
    n = len(v)
    segs = [(v[i], v[(i + 1) % n]) for i in range(n)]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            p1, p2 = segs[i]
            q1, q2 = segs[j]
            d1, d2 = cross(q1, q2, p1), cross(q1, q2, p2)
            d3, d4 = cross(p1, p2, q1), cross(p1, p2, q2)
            if d1 * d2 < 0 and d3 * d4 < 0:
                return False
    return True


@dataclass(frozen=True)
class AnnularSector(Region):
    """``r_in <= |x - c| <= r_out`` with polar angle in [angle_start, angle_end].

    Angles are measured counter-clockwise from the reference ray at angle
    ``ref_angle`` (radians, from the +x axis).
    """

    center: tuple[float, float]
    r_in: float
    r_out: float
    angle_start: float
    angle_end: float
    ref_angle: float = 0.0

    def __post_init__(self):
        if not (0 <= self.r_in < self.r_out):
            raise ValidationError(f"annular sector needs 0 <= r_in < r_out, got {self.r_in}, {self.r_out}")
        if not (0 < self.angle_end - self.angle_start <= TWO_PI):
            raise ValidationError("annular sector angle range must be in (0, 2*pi]")

    def contains_points(self, pts):
        c = np.asarray(self.center, float)
        dx, dy = pts[:, 0] - c[0], pts[:, 1] - c[1]
        rho = np.hypot(dx, dy)
        slack = _BOUNDARY_REL * max(self.r_out, 1.0)
        theta = np.arctan2(dy, dx) - self.ref_angle
        ok_r = (rho >= self.r_in - slack) & (rho <= self.r_out + slack)
        ok_t = _angle_in(theta, self.angle_start, self.angle_end, 1e-12) | (rho <= slack)
        return ok_r & ok_t

    def bbox(self):
        cx, cy = self.center
        r = self.r_out
        return (cx - r, cy - r, cx + r, cy + r)

    def area(self) -> float:
        return 0.5 * (self.angle_end - self.angle_start) * (self.r_out**2 - self.r_in**2)

    def boundary_paths(self):
        t = self.ref_angle + np.linspace(self.angle_start, self.angle_end, 129)
        c = np.asarray(self.center, float)
        outer = c + self.r_out * np.column_stack([np.cos(t), np.sin(t)])
        inner = c + self.r_in * np.column_stack([np.cos(t[::-1]), np.sin(t[::-1])])
        path = np.vstack([outer, inner])
        return [np.vstack([path, path[:1]])]


@dataclass(frozen=True)
class RadialGraphSector(Region):
    """Polar region ``inner(theta) <= rho <= outer(theta)`` about ``center``.

    ``inner`` and ``outer`` are radius samples at equally spaced angles
    covering [angle_start, angle_end] (inclusive), linearly interpolated.
    Angles are measured from the reference ray at ``ref_angle``; a negative
    ``orientation`` measures them clockwise instead.
    """

    center: tuple[float, float]
    angle_start: float
    angle_end: float
    inner: tuple
    outer: tuple
    ref_angle: float = 0.0
    orientation: int = 1

    def __post_init__(self):
        inner = np.asarray(self.inner, float).ravel()
        outer = np.asarray(self.outer, float).ravel()
        if len(inner) != len(outer) or len(inner) < 2:
            raise ValidationError("inner/outer radius samples must have equal length >= 2")
        if not self.angle_end > self.angle_start:
            raise ValidationError("radial sector needs angle_end > angle_start")
        if np.any(inner < 0) or np.any(outer < inner) or not np.any(outer > inner):
            raise ValidationError("radial sector needs 0 <= inner <= outer with positive area")
        object.__setattr__(self, "inner", tuple(inner.tolist()))
        object.__setattr__(self, "outer", tuple(outer.tolist()))

    @classmethod
    def from_functions(cls, center, angle_start, angle_end, inner_fn, outer_fn, n: int = 4097,
                       ref_angle: float = 0.0, orientation: int = 1) -> "RadialGraphSector":
        theta = np.linspace(angle_start, angle_end, n)
        return cls(tuple(center), angle_start, angle_end,
                   tuple(np.broadcast_to(inner_fn(theta), theta.shape)),
                   tuple(np.broadcast_to(outer_fn(theta), theta.shape)),
                   ref_angle, orientation)

    def _angles(self) -> np.ndarray:
        return np.linspace(self.angle_start, self.angle_end, len(self.inner))

    def _to_world_angle(self, theta):
        return self.ref_angle + self.orientation * theta

    def contains_points(self, pts):
        c = np.asarray(self.center, float)
        dx, dy = pts[:, 0] - c[0], pts[:, 1] - c[1]
        rho = np.hypot(dx, dy)
        theta = self.orientation * (np.arctan2(dy, dx) - self.ref_angle)
        theta = np.mod(theta - self.angle_start, TWO_PI) + self.angle_start
        slack_t = 1e-12
        in_t = theta <= self.angle_end + slack_t
        # points just below angle_start wrap to ~2*pi; pull them back
        near_start = theta >= self.angle_start + TWO_PI - slack_t
        theta = np.where(near_start, self.angle_start, np.minimum(theta, self.angle_end))
        in_t |= near_start
        ang = self._angles()
        lo = np.interp(theta, ang, self.inner)
        hi = np.interp(theta, ang, self.outer)
        slack = _BOUNDARY_REL * max(max(self.outer), 1.0)
        return in_t & (rho >= lo - slack) & (rho <= hi + slack)

    def bbox(self):
        pts = np.vstack(self.boundary_paths())
        return (*pts.min(axis=0), *pts.max(axis=0))

    def area(self) -> float:
        ang = self._angles()
        integrand = 0.5 * (np.asarray(self.outer) ** 2 - np.asarray(self.inner) ** 2)
        return float(np.trapezoid(integrand, ang)) if hasattr(np, "trapezoid") else float(np.trapz(integrand, ang))

    def boundary_paths(self):
        ang = self._angles()
        wa = self._to_world_angle(ang)
        c = np.asarray(self.center, float)
        u = np.column_stack([np.cos(wa), np.sin(wa)])
        outer = c + np.asarray(self.outer)[:, None] * u
        inner = c + np.asarray(self.inner)[::-1, None] * u[::-1]
        path = np.vstack([outer, inner])
        return [np.vstack([path, path[:1]])]


@dataclass(frozen=True)
class Union(Region):
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ValidationError("union of no regions")

    def contains_points(self, pts):
        out = np.zeros(len(pts), dtype=bool)
        for p in self.parts:
            out |= p.contains_points(pts)
        return out

    def bbox(self):
        bbs = np.array([p.bbox() for p in self.parts])
        return (bbs[:, 0].min(), bbs[:, 1].min(), bbs[:, 2].max(), bbs[:, 3].max())

    def boundary_paths(self):
        return [path for p in self.parts for path in p.boundary_paths()]


@dataclass(frozen=True)
class Difference(Region):
    base: Region
    removed: Region

    def contains_points(self, pts):
        return self.base.contains_points(pts) & ~self.removed.contains_points(pts)

    def bbox(self):
        return self.base.bbox()

    def boundary_paths(self):
        return self.base.boundary_paths() + self.removed.boundary_paths()


def contains(r: Region, x) -> bool | np.ndarray:
    """Membership of a point (returns bool) or of an (N, 2) array (returns mask)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        return bool(r.contains_points(arr.reshape(1, 2))[0])
    return r.contains_points(as_points(arr))


@dataclass(frozen=True, eq=False)
class QuadratureMeasure:
    """Weighted sample points standing in for the measure.

    ``spacing`` is the grid size for discretised regions (None for atoms);
    ``atomic`` marks hand-built point masses, which do not satisfy the
    absolute-continuity hypothesis behind the first-variation formula.
    """

    points: np.ndarray
    weights: np.ndarray
    spacing: float | None = None
    atomic: bool = False
    region: Region | None = field(default=None, repr=False)

    def __post_init__(self):
        p = np.array(self.points, dtype=float).reshape(-1, 2)
        w = np.array(self.weights, dtype=float).ravel()
        if len(p) != len(w):
            raise ValidationError("points and weights differ in length")
        if np.any(~(w > 0)) or not np.all(np.isfinite(p)):
            raise ValidationError("weights must be positive and points finite")
        p.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "weights", w)

    @classmethod
    def empty(cls) -> "QuadratureMeasure":
        """The zero measure (no samples)."""
        return cls(np.zeros((0, 2)), np.zeros(0))

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self) -> int:
        return len(self.weights)

    def subset(self, mask) -> "QuadratureMeasure":
        return QuadratureMeasure(self.points[mask], self.weights[mask], self.spacing, self.atomic, self.region)

    def translated(self, shift) -> "QuadratureMeasure":
        return QuadratureMeasure(self.points + np.asarray(shift, float), self.weights,
                                 self.spacing, self.atomic, None)


def discretize_region(r: Region, h: float) -> QuadratureMeasure:
    """Midpoint rule: one sample of weight h^2 at each contained cell center."""
    if not h > 0:
        raise ValidationError(f"grid size must be positive, got {h}")
    x0, y0, x1, y1 = r.bbox()
    nx = max(1, math.ceil((x1 - x0) / h - 1e-9))
    ny = max(1, math.ceil((y1 - y0) / h - 1e-9))
    xs = x0 + (np.arange(nx) + 0.5) * h
    ys = y0 + (np.arange(ny) + 0.5) * h
    gx, gy = np.meshgrid(xs, ys)  # row-major: y outer, x inner
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    keep = r.contains_points(pts)
    if not np.any(keep):
        raise DegenerateMeasureError(f"no cell center of the h={h:g} grid lies in the region")
    pts = pts[keep]
    return QuadratureMeasure(pts, np.full(len(pts), h * h), spacing=h, region=r)


def from_points(atoms: Sequence) -> QuadratureMeasure:
    """Atomic measure from ``[(point, weight), ...]``."""
    atoms = list(atoms)
    if not atoms:
        raise DegenerateMeasureError("atomic measure needs at least one atom")
    pts = np.array([np.asarray(p, float).ravel()[:2] for p, _ in atoms])
    w = np.array([float(wt) for _, wt in atoms])
    bad = np.flatnonzero(~(w > 0))
    if len(bad):
        raise ValidationError(f"atom {int(bad[0])} has nonpositive weight {w[bad[0]]}")
    return QuadratureMeasure(pts, w, atomic=True)
