"""Functional value, first variation and the probes built on top of them.

The functional is

    F(S) = sum_i w_i * dist(x_i, S) + lam * length(S)

for a quadrature measure {(x_i, w_i)}.  Variation fields live on the graph
only: one vector per vertex, linear along edges.  Their first variation is

    dF(X) = sum_i w_i <X(p_i), (p_i - x_i)/|p_i - x_i|> - lam * <H, X>

with p_i the nearest point and <H, X> = sum_v <X(v), a_v>, where the
curvature atom a_v is the sum of unit vectors from v along its edges.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import breadth_first_order

from .errors import TopologyError, ValidationError
from .geometry import (
    EmbeddedGraph,
    Projection,
    graph_length,
    locate_on_graph,
    project_points,
    segment_distance,
)
from .measure import QuadratureMeasure

DIST_FLOOR = 1e-12
# about twice the worst residual / (h + 1/n_arc) seen on stationary circles
# (lambda in {0.125, 0.3}, n_arc in {128, 256, 512}, h in {0.02, 0.01, 0.005})
STATIONARITY_C = 0.5


class AtomicMeasureWarning(UserWarning):
    """Stationarity was classified against a measure with atoms."""


@dataclass(frozen=True, eq=False)
class OnSigmaField:
    """Vector field on the graph: per-vertex values, linear along edges."""

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(v)):
            raise ValidationError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, g: EmbeddedGraph) -> "OnSigmaField":
        return cls(np.zeros((g.n_vertices, 2)))

    @classmethod
    def constant(cls, g: EmbeddedGraph, vec) -> "OnSigmaField":
        return cls(np.tile(np.asarray(vec, float), (g.n_vertices, 1)))

    @classmethod
    def hat(cls, g: EmbeddedGraph, vertex: int, axis: int) -> "OnSigmaField":
        """e_axis at one vertex, zero at all others."""
        v = np.zeros((g.n_vertices, 2))
        v[vertex, axis] = 1.0
        return cls(v)

    @classmethod
    def at_vertex(cls, g: EmbeddedGraph, vertex: int, vec) -> "OnSigmaField":
        v = np.zeros((g.n_vertices, 2))
        v[vertex] = vec
        return cls(v)

    @classmethod
    def radial(cls, g: EmbeddedGraph, center=(0.0, 0.0)) -> "OnSigmaField":
        """Unit vectors pointing away from ``center``."""
        d = g.vertices - np.asarray(center, float)
        n = np.hypot(d[:, 0], d[:, 1])
        if np.any(n == 0):
            raise ValidationError("radial field undefined at the center")
        return cls(d / n[:, None])

    @classmethod
    def from_function(cls, g: EmbeddedGraph, fn) -> "OnSigmaField":
        return cls(np.asarray(fn(g.vertices), float))

    def check(self, g: EmbeddedGraph) -> None:
        if len(self.values) != g.n_vertices:
            raise ValidationError(
                f"field has {len(self.values)} vectors but the graph has {g.n_vertices} vertices"
            )

    def at(self, g: EmbeddedGraph, edge_id: np.ndarray, param: np.ndarray) -> np.ndarray:
        a, b = g.edges[edge_id, 0], g.edges[edge_id, 1]
        t = np.asarray(param)[:, None]
        return (1.0 - t) * self.values[a] + t * self.values[b]

    def sup_norm(self) -> float:
        if len(self.values) == 0:
            return 0.0
        return float(np.max(np.hypot(self.values[:, 0], self.values[:, 1])))

    def __add__(self, other: "OnSigmaField") -> "OnSigmaField":
        return OnSigmaField(self.values + other.values)

    def __mul__(self, a: float) -> "OnSigmaField":
        return OnSigmaField(a * self.values)

    __rmul__ = __mul__


def curvature_atoms(g: EmbeddedGraph) -> np.ndarray:
    """Per-vertex atoms a_v = sum over incident edges of the unit vector leaving v."""
    tau = g.edge_vectors / g.edge_lengths[:, None]
    atoms = np.zeros((g.n_vertices, 2))
    np.add.at(atoms, g.edges[:, 0], tau)
    np.add.at(atoms, g.edges[:, 1], -tau)
    return atoms


def curvature_pairing(g: EmbeddedGraph, X: OnSigmaField) -> float:
    """<H, X>; the rate of change of length under X is its negative."""
    X.check(g)
    return float(np.sum(X.values * curvature_atoms(g)))


def length_rate(g: EmbeddedGraph, X: OnSigmaField) -> float:
    """d/de length(S + eX) at e = 0."""
    return -curvature_pairing(g, X)


@dataclass
class VariationReport:
    integral_term: float
    curvature_term: float
    total: float
    basis_residuals: list[tuple[str, float]] = field(default_factory=list)
    residual_norm: float = float("nan")
    verdict: str | None = None
    tolerance: float | None = None
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "integral_term": self.integral_term,
            "curvature_term": self.curvature_term,
            "total": self.total,
            "residual_norm": self.residual_norm,
            "verdict": self.verdict,
            "tolerance": self.tolerance,
            "n_basis": len(self.basis_residuals),
            "warnings": list(self.warnings),
        }


def _project(g, mu, projection, ridge_tol=None, detail=False):
    if projection is not None:
        if len(projection) != len(mu):
            raise ValidationError("cached projection does not match the measure")
        return projection
    return project_points(mu.points, g, ridge_tol=ridge_tol, detail=detail)


def average_distance(g: EmbeddedGraph, mu: QuadratureMeasure, projection: Projection | None = None) -> float:
    if len(mu) == 0:
        return 0.0
    pr = _project(g, mu, projection)
    return float(np.sum(mu.weights * pr.distance))


def functional_value(g: EmbeddedGraph, mu: QuadratureMeasure, lam: float,
                     projection: Projection | None = None) -> float:
    if lam < 0:
        raise ValidationError(f"lambda must be non-negative, got {lam}")
    return average_distance(g, mu, projection) + lam * graph_length(g)


def _integral_gradient(g: EmbeddedGraph, mu: QuadratureMeasure, pr: Projection,
                       dist_floor: float) -> np.ndarray:
    """d/dX of the distance term for every hat field, as a (V, 2) array."""
    use = pr.distance >= dist_floor
    w = mu.weights[use]
    d = pr.direction[use] * w[:, None]
    t = pr.param[use]
    e = pr.edge_id[use]
    a, b = g.edges[e, 0], g.edges[e, 1]
    nv = g.n_vertices
    out = np.empty((nv, 2))
    for i in range(2):
        out[:, i] = (np.bincount(a, weights=(1.0 - t) * d[:, i], minlength=nv)
                     + np.bincount(b, weights=t * d[:, i], minlength=nv))
    return out


def first_variation(g: EmbeddedGraph, mu: QuadratureMeasure, lam: float, X: OnSigmaField,
                    dist_floor: float = DIST_FLOOR, projection: Projection | None = None) -> VariationReport:
    """Directional derivative of F along X (samples closer than ``dist_floor`` skipped)."""
    X.check(g)
    if lam < 0:
        raise ValidationError(f"lambda must be non-negative, got {lam}")
    if len(mu):
        pr = _project(g, mu, projection)
        use = pr.distance >= dist_floor
        xf = X.at(g, pr.edge_id[use], pr.param[use])
        integral = float(np.sum(mu.weights[use] * np.einsum("ij,ij->i", xf, pr.direction[use])))
    else:
        integral = 0.0
    curv = curvature_pairing(g, X)
    total = integral - lam * curv
    return VariationReport(integral, curv, total, [("X", total)], abs(total))


def shape_gradient(g: EmbeddedGraph, mu: QuadratureMeasure, lam: float,
                   dist_floor: float = DIST_FLOOR, projection: Projection | None = None) -> np.ndarray:
    """First variation along each hat field: row v, column i <-> e_i at vertex v."""
    if lam < 0:
        raise ValidationError(f"lambda must be non-negative, got {lam}")
    grad = -lam * curvature_atoms(g)
    if len(mu):
        grad += _integral_gradient(g, mu, _project(g, mu, projection), dist_floor)
    return grad


def stationarity_tolerance(h: float | None, n_arc: int | None) -> float:
    """Default verdict threshold C * (h + 1/n_arc)."""
    return STATIONARITY_C * ((h or 0.0) + (1.0 / n_arc if n_arc else 0.0))


def stationarity_residual(g: EmbeddedGraph, mu: QuadratureMeasure, lam: float,
                          basis: str | Sequence = "hat", tol: float | None = None,
                          n_arc: int | None = 512, dist_floor: float = DIST_FLOOR,
                          projection: Projection | None = None) -> VariationReport:
    """Evaluate the Euler equation on a finite basis of fields.

    ``basis`` is ``"hat"`` (e_1, e_2 at every vertex) or a sequence of fields,
    optionally as ``(name, field)`` pairs; user fields are rescaled to unit
    sup-norm.  The verdict is ``stationary`` iff the largest absolute residual
    is at most ``tol``, and ``inconclusive`` for atomic measures.
    """
    if tol is None:
        tol = stationarity_tolerance(mu.spacing, n_arc)
    pr = _project(g, mu, projection) if len(mu) else None
    if isinstance(basis, str):
        if basis != "hat":
            raise ValidationError(f"unknown basis {basis!r}")
        grad = shape_gradient(g, mu, lam, dist_floor, pr)
        residuals = [(f"v{v}.{'xy'[i]}", float(grad[v, i])) for v in range(g.n_vertices) for i in range(2)]
        integral = curv = total = float("nan")
    else:
        residuals = []
        for k, item in enumerate(basis):
            name, X = item if isinstance(item, tuple) else (f"f{k}", item)
            s = X.sup_norm()
            if s == 0:
                raise ValidationError(f"basis field {name} is identically zero")
            rep = first_variation(g, mu, lam, X * (1.0 / s), dist_floor, pr)
            residuals.append((name, rep.total))
        integral = curv = total = float("nan")
    norm = max((abs(r) for _, r in residuals), default=0.0)
    notes = []
    if mu.atomic:
        verdict = "inconclusive"
        msg = "measure has atoms; the Euler equation is only necessary for atomless measures"
        notes.append(msg)
        warnings.warn(msg, AtomicMeasureWarning, stacklevel=2)
    else:
        verdict = "stationary" if norm <= tol else "non-stationary"
    return VariationReport(integral, curv, total, residuals, norm, verdict, tol, notes)


@dataclass
class SlopeProbe:
    eps: np.ndarray
    ratios: np.ndarray
    limit: float
    spike_direction: np.ndarray

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.eps.tolist(), self.ratios.tolist()))


def extrapolate_sqrt(eps: np.ndarray, values: np.ndarray) -> float:
    """Least-squares limit of values(eps) as eps -> 0.

    The model is L + c1 eps^1/2 + c3 eps^3/2 (+ c4 eps^2 with four or more
    points): the spike gain near a straight piece of S expands in odd half
    powers of eps, with the eps^2 term coming from the strip beside the spike.
    """
    eps = np.asarray(eps, float)
    values = np.asarray(values, float)
    powers = [0.0, 0.5, 1.5, 2.0][:min(len(eps), 4)]
    coef, *_ = np.linalg.lstsq(np.column_stack([eps ** q for q in powers]), values, rcond=None)
    return float(coef[0])


def slope_probe(g: EmbeddedGraph, mu: QuadratureMeasure | None, lam: float, attach, direction,
                eps_list: Iterable[float], check_points: int = 33) -> SlopeProbe:
    """Difference quotients of F when a spike of length eps is grown at ``attach``.

    The distance term after adding the spike is min(dist to S, dist to spike)
    sample by sample, and the length grows by exactly eps, so the quotient is
    lam + (change of distance term) / eps.  The reported limit comes from
    extrapolate_sqrt.
    """
    eps = np.asarray(list(eps_list), float)
    if len(eps) == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise ValidationError("eps_list must be positive and strictly decreasing")
    u = np.asarray(direction, float)
    nu = math.hypot(*u)
    if nu == 0:
        raise ValidationError("spike direction must be nonzero")
    u = u / nu
    p = np.asarray(attach, float)
    locate_on_graph(p, g)
    s = np.linspace(0.0, eps[0], check_points)[1:]
    spike = p + s[:, None] * u
    pr = project_points(spike, g)
    scale = max(g.diameter(), 1.0)
    if np.max(np.hypot(*(pr.foot - p).T)) > 1e-9 * scale:
        raise ValidationError("spike does not project back onto the attach point")
    mu = mu if mu is not None else QuadratureMeasure.empty()
    ratios = np.empty(len(eps))
    if len(mu):
        d0 = project_points(mu.points, g).distance
    for k, e in enumerate(eps):
        if len(mu):
            ds = segment_distance(mu.points, p, p + e * u)
            gain = float(np.sum(mu.weights * (np.minimum(d0, ds) - d0)))
        else:
            gain = 0.0
        ratios[k] = gain / e + lam
    return SlopeProbe(eps, ratios, extrapolate_sqrt(eps, ratios), u)


def on_cycle(g: EmbeddedGraph, v: int) -> bool:
    """True when some edge at ``v`` is not a bridge."""
    for k, u in g.neighbors(v):
        keep = np.ones(g.n_edges, bool)
        keep[k] = False
        e = g.edges[keep]
        adj = sparse.csr_matrix((np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])),
                                shape=(g.n_vertices, g.n_vertices))
        reach = breadth_first_order(adj, v, directed=False, return_predecessors=False)
        if u in set(reach.tolist()):
            return True
    return False


def _walk(g: EmbeddedGraph, v: int, first_edge: int, first_vertex: int):
    """Follow a degree-2 chain from v; returns (vertices, edges) until a branch or v itself."""
    verts, edges = [v], []
    cur_e, cur_v = first_edge, first_vertex
    while True:
        edges.append(cur_e)
        verts.append(cur_v)
        if cur_v == v or g.degree[cur_v] != 2:
            break
        nxt = [(k, w) for k, w in g.neighbors(cur_v) if k != cur_e]
        cur_e, cur_v = nxt[0]
    return verts, edges


@dataclass
class LoopCut:
    graph: EmbeddedGraph
    removed_length: float
    affected_edges: list[int]
    arclength: float


def cut_loop(g: EmbeddedGraph, vertex: int, eps: float) -> LoopCut:
    """Remove the sub-arc of diameter ``eps`` centered (in arclength) at ``vertex``."""
    if not 0 <= vertex < g.n_vertices:
        raise ValidationError(f"vertex {vertex} out of range")
    if not on_cycle(g, vertex):
        raise TopologyError(f"vertex {vertex} does not lie on a cycle")
    if g.degree[vertex] != 2:
        raise TopologyError(f"loop cut needs a degree-2 vertex, vertex {vertex} has degree {g.degree[vertex]}")
    (e1, w1), (e2, w2) = g.neighbors(vertex)
    paths = [_walk(g, vertex, e1, w1), _walk(g, vertex, e2, w2)]
    cum = []
    for verts, _ in paths:
        seg = np.hypot(*np.diff(g.vertices[verts], axis=0).T)
        cum.append(np.r_[0.0, np.cumsum(seg)])
    closed = paths[0][0][-1] == vertex
    s_max = min(cum[0][-1], cum[1][-1])
    if closed:
        s_max = 0.5 * cum[0][-1]

    def point_at(k, s):
        verts, _ = paths[k]
        j = int(np.searchsorted(cum[k], s, side="right")) - 1
        j = min(j, len(verts) - 2)
        t = (s - cum[k][j]) / (cum[k][j + 1] - cum[k][j])
        return j, g.vertices[verts[j]] + t * (g.vertices[verts[j + 1]] - g.vertices[verts[j]])

    def diam(s):
        pts = []
        for k in range(2):
            j, p = point_at(k, s)
            pts.extend(g.vertices[paths[k][0][1:j + 1]])
            pts.append(p)
        pts.append(g.vertices[vertex])
        pts = np.asarray(pts)
        diff = pts[:, None, :] - pts[None, :, :]
        return float(np.max(np.hypot(diff[..., 0], diff[..., 1])))

    if not 0 < eps < diam(0.999 * s_max):
        raise ValidationError(f"cut diameter {eps} is not attainable on this loop")
    lo, hi = 0.0, 0.999 * s_max
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if diam(mid) < eps:
            lo = mid
        else:
            hi = mid
    s = 0.5 * (lo + hi)

    remove_edges: set[int] = set()
    remove_verts: set[int] = {vertex}
    new_pts, new_edges = [], []
    nv = g.n_vertices
    for k in range(2):
        verts, edges = paths[k]
        j, p = point_at(k, s)
        remove_edges.update(edges[:j + 1])
        remove_verts.update(verts[1:j + 1])
        far = verts[j + 1]
        if np.hypot(*(g.vertices[far] - p)) < 10 * g.eps_len:
            continue
        new_pts.append(p)
        new_edges.append((nv + len(new_pts) - 1, far))
    keep_v = [i for i in range(nv) if i not in remove_verts]
    index = {old: new for new, old in enumerate(keep_v)}
    verts_out = [g.vertices[i] for i in keep_v] + new_pts
    for q in range(len(new_pts)):
        index[nv + q] = len(keep_v) + q
    edges_out = [(index[i], index[j]) for k, (i, j) in enumerate(g.edges.tolist()) if k not in remove_edges]
    edges_out += [(index[i], index[j]) for i, j in new_edges]
    try:
        cut = EmbeddedGraph(np.asarray(verts_out), edges_out, g.eps_len)
    except ValidationError as exc:
        raise TopologyError(f"cut leaves an invalid graph: {exc}") from exc
    return LoopCut(cut, graph_length(g) - graph_length(cut), sorted(remove_edges), s)


@dataclass
class LoopCutProbe:
    eps: np.ndarray
    delta_F: np.ndarray
    removed_length: np.ndarray

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.eps.tolist(), self.delta_F.tolist()))


def loop_cut_probe(g: EmbeddedGraph, mu: QuadratureMeasure, lam: float, vertex: int,
                   eps_list: Iterable[float]) -> LoopCutProbe:
    """F(S minus an arc of diameter eps around ``vertex``) - F(S) for each eps.

    Removing part of S can only increase distances, and only for samples
    whose nearest point sat on an affected edge; those are re-projected.
    """
    eps = np.asarray(list(eps_list), float)
    if len(eps) == 0 or np.any(eps <= 0):
        raise ValidationError("eps_list must be positive")
    base = project_points(mu.points, g) if len(mu) else None
    out_f, out_len = [], []
    for e in eps:
        cut = cut_loop(g, vertex, float(e))
        dgain = 0.0
        if base is not None:
            hit = np.isin(base.edge_id, cut.affected_edges)
            if np.any(hit):
                d_new = project_points(mu.points[hit], cut.graph).distance
                dgain = float(np.sum(mu.weights[hit] * (d_new - base.distance[hit])))
        out_f.append(dgain - lam * cut.removed_length)
        out_len.append(cut.removed_length)
    return LoopCutProbe(eps, np.asarray(out_f), np.asarray(out_len))


@dataclass
class FDOracle:
    value: float
    excluded_mass: float
    kept: np.ndarray

    def as_dict(self) -> dict:
        return {"value": self.value, "excluded_mass": self.excluded_mass,
                "kept_samples": int(np.count_nonzero(self.kept))}


def fd_variation_oracle(g: EmbeddedGraph, mu: QuadratureMeasure, lam: float, X: OnSigmaField,
                        step: float, margin_factor: float = 10.0,
                        ridge_tol: float | None = None) -> FDOracle:
    """Central difference of F along X on a fixed quadrature.

    Samples whose projection margin is below ``margin_factor * step`` are
    dropped from both evaluations, since the distance is not differentiable
    across the ridge set; compare against the analytic variation on
    ``mu.subset(result.kept)``.
    """
    if not step > 0:
        raise ValidationError("step must be positive")
    X.check(g)
    if len(mu):
        pr = project_points(mu.points, g, ridge_tol=ridge_tol, detail=True)
        kept = pr.margin >= margin_factor * step
    else:
        kept = np.zeros(0, bool)
    sub = mu.subset(kept)
    g_plus = g.moved(step * X.values)
    g_minus = g.moved(-step * X.values)
    value = (functional_value(g_plus, sub, lam) - functional_value(g_minus, sub, lam)) / (2.0 * step)
    excluded = float(np.sum(mu.weights[~kept])) if len(mu) else 0.0
    return FDOracle(value, excluded, kept)
