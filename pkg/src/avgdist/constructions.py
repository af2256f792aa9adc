"""Scene builders with known stationarity behaviour, plus the corner formulas.

Conventions for the curved corner: the line v through both arc centers is
the x axis, the symmetry line u is the y axis, and the corner point O sits
at (0, R sin(alpha)).  The right arc runs from O down to Q and is centered
at C1 = (-R cos(alpha), 0); the left arc is its mirror image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import DegenerateConstructionError, SolverError, ValidationError
from .geometry import EmbeddedGraph, arc_polyline, polyline
from .measure import (
    AnnularSector,
    Disk,
    QuadratureMeasure,
    RadialGraphSector,
    Rectangle,
    Region,
    Union,
    discretize_region,
)


@dataclass(frozen=True, eq=False)
class Scene:
    graph: EmbeddedGraph
    region: Region
    lam: float
    provenance: str
    n_arc: int | None = None
    params: dict = field(default_factory=dict)
    pieces: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lam < 0:
            raise ValidationError(f"lambda must be non-negative, got {self.lam}")
        inside = self.region.contains_points(self.graph.vertices)
        if not np.all(inside):
            bad = int(np.flatnonzero(~inside)[0])
            raise ValidationError(f"vertex {bad} at {self.graph.vertices[bad].tolist()} lies outside the region")

    def measure(self, h: float) -> QuadratureMeasure:
        return discretize_region(self.region, h)


def circle_radius(lam: float) -> float:
    """Radius of the stationary circle in the unit disk."""
    if not 0 < lam < 0.5:
        raise DegenerateConstructionError(
            f"a stationary circle needs 0 < lambda < 1/2, got {lam} (at 1/2 it shrinks to a point)"
        )
    return math.sqrt(0.5 - lam)


def stationary_circle(lam: float, n_arc: int = 512) -> Scene:
    r = circle_radius(lam)
    ang = np.linspace(0.0, 2 * math.pi, n_arc, endpoint=False)
    g = polyline(r * np.column_stack([np.cos(ang), np.sin(ang)]), closed=True)
    return Scene(g, Disk((0.0, 0.0), 1.0), lam, f"stationary circle r={r:.6g} in unit disk", n_arc,
                 {"radius": r})


def stadium_domain(lam: float, L: float, n_seg: int = 32) -> Scene:
    """Segment (0,0)-(L,0) inside the rectangle-plus-caps domain of half-width sqrt(lam)."""
    if not lam > 0:
        raise DegenerateConstructionError(f"stadium needs lambda > 0 (zero width otherwise), got {lam}")
    if not L > 0:
        raise DegenerateConstructionError(f"stadium needs L > 0, got {L}")
    if n_seg < 1:
        raise ValidationError("n_seg must be at least 1")
    rho = math.sqrt(lam)
    xs = np.linspace(0.0, L, n_seg + 1)
    g = polyline(np.column_stack([xs, np.zeros_like(xs)]))
    pieces = {
        "rectangle": Rectangle((0.0, -rho), (L, rho)),
        "cap_left": AnnularSector((0.0, 0.0), 0.0, rho, 0.5 * math.pi, 1.5 * math.pi),
        "cap_right": AnnularSector((L, 0.0), 0.0, rho, -0.5 * math.pi, 0.5 * math.pi),
    }
    region = Union(tuple(pieces.values()))
    return Scene(g, region, lam, f"stadium L={L:g} caps sqrt(lambda)={rho:.6g}", n_seg,
                 {"L": L, "cap_radius": rho, "area": 2 * L * rho + math.pi * lam}, pieces)


def wedge_set(phi: float, arm_len: float = 1.0, margin: float = 0.5, lam: float = 0.25,
              n_arm: int = 32, bisector: float = 0.5 * math.pi) -> Scene:
    """Two arms from the origin at +-phi about the bisector direction, in a disk."""
    if not 0 < phi < 0.5 * math.pi:
        raise ValidationError(
            f"half-aperture must lie in (0, pi/2), got {phi}; pi/2 is a single straight segment"
        )
    if not arm_len > 0 or margin <= 0:
        raise ValidationError("arm_len and margin must be positive")
    s = np.linspace(0.0, arm_len, n_arm + 1)[1:]
    d1 = np.array([math.cos(bisector + phi), math.sin(bisector + phi)])
    d2 = np.array([math.cos(bisector - phi), math.sin(bisector - phi)])
    # one polyline: tip of arm 1, ..., origin, ..., tip of arm 2
    pts = np.vstack([s[::-1, None] * d1, [[0.0, 0.0]], s[:, None] * d2])
    g = polyline(pts)
    return Scene(g, Disk((0.0, 0.0), arm_len + margin), lam,
                 f"wedge aperture {math.degrees(2 * phi):.6g} deg", n_arm,
                 {"phi": phi, "arm_len": arm_len, "margin": margin, "apex": n_arm})


def rect_height_lhs(k: float, h: float) -> float:
    """Closed form of -int_{-k}^{k} int_{-h}^{0} y / sqrt(z^2 + y^2) dy dz."""
    if h == 0:
        return 0.0
    s = math.hypot(k, h)
    return k * s + h * h * math.log((k + s) / h) - k * k


def rect_height_quadrature(k: float, h: float) -> float:
    """Same double integral by adaptive 2D quadrature."""
    val, _ = integrate.dblquad(lambda y, z: -y / math.hypot(z, y) if (z or y) else 0.0,
                               -k, k, -h, 0.0, epsabs=1e-13, epsrel=1e-12)
    return val


def solve_rect_height(k: float, lam: float, tol: float = 1e-12) -> float:
    """Depth h of the rectangles below P and Q that balance the endpoint atoms."""
    if not (k > 0 and lam > 0):
        raise ValidationError(f"need k > 0 and lambda > 0, got k={k}, lambda={lam}")
    lo, hi = 0.0, max(k, 1.0)
    while rect_height_lhs(k, hi) < lam:
        hi *= 2.0
        if hi > 1e8:
            raise SolverError("no sign change found for the rectangle height", residual=lam)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if rect_height_lhs(k, mid) < lam:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CornerParams:
    lam: float
    R: float = 1.0
    alpha: float = math.pi / 6
    k: float | None = None

    def __post_init__(self):
        if not self.lam > 0 or not self.R > 0:
            raise ValidationError("corner needs lambda > 0 and R > 0")
        if not 0 < self.alpha < 0.5 * math.pi:
            raise ValidationError(f"alpha must lie in (0, pi/2), got {self.alpha}")
        kmax = self.R * (1.0 - math.cos(self.alpha))
        if self.k is None:
            object.__setattr__(self, "k", 0.75 * kmax)
        if not 0 < self.k < kmax:
            raise ValidationError(f"k must lie in (0, {kmax:.6g}), got {self.k}")

    @property
    def phi(self) -> float:
        return 0.5 * math.pi - self.alpha

    @property
    def b(self) -> float:
        return math.sqrt(self.R**2 + 2 * self.lam) - self.R

    @property
    def r(self) -> float:
        return math.sqrt(2 * self.lam)

    @property
    def h(self) -> float:
        return solve_rect_height(self.k, self.lam)

    def f(self, theta):
        """Outer radius of region C about C1 at polar angle theta in [0, alpha]."""
        c = self.R * math.cos(self.alpha) / np.cos(theta)
        return np.sqrt(2 * self.R**2 + 2 * self.lam - c * c)

    def points(self) -> dict[str, np.ndarray]:
        R, a = self.R, self.alpha
        return {
            "C1": np.array([-R * math.cos(a), 0.0]),
            "C2": np.array([R * math.cos(a), 0.0]),
            "O": np.array([0.0, R * math.sin(a)]),
            "Q": np.array([R * (1 - math.cos(a)), 0.0]),
            "P": np.array([-R * (1 - math.cos(a)), 0.0]),
        }


def corner_domain(p: CornerParams, n_arc: int = 512, n_profile: int = 4097) -> Scene:
    """Two arcs of radius R meeting at O plus the seven-piece domain that makes them stationary."""
    if not math.isclose(float(p.f(p.alpha)), p.R + p.b, rel_tol=0.0, abs_tol=1e-12):
        raise DegenerateConstructionError("f(alpha) != R + b; corner formulas inconsistent")
    pt = p.points()
    R, a, h = p.R, p.alpha, p.h
    left = arc_polyline(pt["C2"], R, math.pi, math.pi - a, n_arc)
    right = arc_polyline(pt["C1"], R, a, 0.0, n_arc)
    g = polyline(np.vstack([left, right[1:]]))

    def inner_b(t):
        return R * math.cos(a) / np.cos(t)

    def radius_R(t):
        return np.full_like(t, R)

    B = RadialGraphSector.from_functions(pt["C1"], 0.0, a, inner_b, radius_R, n_profile)
    C = RadialGraphSector.from_functions(pt["C1"], 0.0, a, radius_R, p.f, n_profile)
    A = RadialGraphSector.from_functions(pt["C2"], 0.0, a, inner_b, radius_R, n_profile,
                                         ref_angle=math.pi, orientation=-1)
    D = RadialGraphSector.from_functions(pt["C2"], 0.0, a, radius_R, p.f, n_profile,
                                         ref_angle=math.pi, orientation=-1)
    F = AnnularSector(tuple(pt["O"]), 0.0, p.r, a, math.pi - a)
    k = p.k
    E = Rectangle((pt["P"][0] - k, -h), (pt["P"][0] + k, 0.0))
    G = Rectangle((pt["Q"][0] - k, -h), (pt["Q"][0] + k, 0.0))
    pieces = {"A": A, "B": B, "C": C, "D": D, "E": E, "F": F, "G": G}
    return Scene(g, Union(tuple(pieces.values())), p.lam,
                 f"curved corner R={R:g} alpha={a:.6g}", n_arc,
                 {"R": R, "alpha": a, "phi": p.phi, "k": k, "b": p.b, "r": p.r, "h": h,
                  "O_index": n_arc}, pieces)


def h_of_phi_closed(phi):
    """cot(phi) ln(sec phi + tan phi) + sec phi - 1."""
    phi = np.asarray(phi, float)
    sec = 1.0 / np.cos(phi)
    return np.log(sec + np.tan(phi)) / np.tan(phi) + sec - 1.0


def _h_integral(phi: float) -> float:
    val, _ = integrate.quad(lambda t: math.cos(phi - t) / math.cos(t) ** 2, 0.0, phi,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def h_of_phi(phi: float, check: bool = True) -> float:
    """(1/sin phi) int_0^phi cos(phi - t)/cos^2 t dt by adaptive quadrature."""
    if not 0 < phi < 0.5 * math.pi:
        raise ValidationError(f"phi must lie in (0, pi/2), got {phi}")
    val = _h_integral(phi) / math.sin(phi)
    if check:
        ref = float(h_of_phi_closed(phi))
        if abs(val - ref) > 1e-10 * max(1.0, abs(ref)):
            raise SolverError(f"h(phi) quadrature disagrees with closed form at phi={phi}", abs(val - ref))
    return val


@dataclass(frozen=True)
class CornerTest:
    ratio: float
    h: float
    verdict: str


def corner_nonstationary_test(lam: float, R1: float, R2: float, phi: float) -> CornerTest:
    """Sufficient test 4 lam / (b1^2 + b2^2) >= h(phi) for a convex corner to be non-stationary."""
    if not (lam > 0 and R1 > 0 and R2 > 0):
        raise ValidationError("lambda, R1 and R2 must be positive")
    b1 = math.sqrt(R1 * R1 + 2 * lam) - R1
    b2 = math.sqrt(R2 * R2 + 2 * lam) - R2
    ratio = 4 * lam / (b1 * b1 + b2 * b2)
    # b_i^2 < 2 lam, so the ratio always exceeds one
    assert ratio > 1.0, ratio
    hv = h_of_phi(phi)
    return CornerTest(ratio, hv, "non-stationary" if ratio >= hv else "undecided")


@dataclass
class GammaReport:
    gamma: np.ndarray
    values: np.ndarray
    brackets: list[tuple[float, float]]
    roots: list[float]
    expected_root: float
    value_at_expected: float
    quadrature_check: float
    note: str

    def as_dict(self) -> dict:
        return {
            "resolution": float(self.gamma[1] - self.gamma[0]) if len(self.gamma) > 1 else None,
            "n_samples": int(len(self.gamma)),
            "roots": self.roots,
            "brackets": self.brackets,
            "expected_root": self.expected_root,
            "value_at_expected": self.value_at_expected,
            "min_value": float(self.values.min()),
            "max_value": float(self.values.max()),
            "all_positive": bool(np.all(self.values > 0)),
            "quadrature_check_max_abs_diff": self.quadrature_check,
            "note": self.note,
        }


def gamma_function(gamma):
    """g(gamma) = int_0^gamma cos(gamma - t)/cos^2 t dt - sin(gamma), via the antiderivative."""
    gamma = np.asarray(gamma, float)
    return np.sin(gamma) * (h_of_phi_closed(gamma) - 1.0)


def gamma_threshold(resolution: float = 1e-3, expected: float = 0.9425) -> GammaReport:
    """Scan g on (0, pi/2) for sign changes and refine each by bisection."""
    if not resolution > 0:
        raise ValidationError("resolution must be positive")
    n = int(math.floor(0.5 * math.pi / resolution))
    gam = resolution * np.arange(1, n)
    gam = gam[gam < 0.5 * math.pi]
    vals = gamma_function(gam)
    brackets, roots = [], []
    for i in np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0):
        lo, hi = float(gam[i]), float(gam[i + 1])
        brackets.append((lo, hi))
        flo = float(gamma_function(lo))
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            fm = float(gamma_function(mid))
            if np.sign(fm) == np.sign(flo):
                lo, flo = mid, fm
            else:
                hi = mid
        roots.append(0.5 * (lo + hi))
    probe = gam[:: max(1, len(gam) // 50)]
    quad = np.array([_h_integral(x) - math.sin(x) for x in probe])
    check = float(np.max(np.abs(quad - gamma_function(probe))))
    if roots:
        note = f"{len(roots)} interior root(s) found"
    else:
        lo_v = float(vals.min())
        note = (f"no interior root: g > 0 at every sample of (0, pi/2) (min {lo_v:.3e} at "
                f"gamma={float(gam[np.argmin(vals)]):.4g}); g(gamma) = sin(gamma)(h(gamma) - 1) and h > 1")
    return GammaReport(gam, vals, brackets, roots, expected, float(gamma_function(expected)), check, note)
