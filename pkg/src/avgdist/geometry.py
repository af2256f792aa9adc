"""Planar embedded graphs, nearest-point projection and arc helpers.

Everything here is two-dimensional.  A graph is a list of vertices plus a
list of straight edges; curved pieces are represented by fine polylines
built with :func:`arc_polyline`.

The projection routine is a vectorised brute force over all edges (exact
per-segment closed form, then a global minimum).  In ``detail`` mode it also
enumerates the *local* minima of the distance along the graph, which is what
ridge membership and the projection margin are defined from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import ValidationError

EPS_LEN = 1e-9
RIDGE_TOL_REL = 1e-7

# target size of the (points x edges) work arrays in one projection chunk
_CHUNK_ENTRIES = 1 << 21


def as_points(x) -> np.ndarray:
    """Coerce ``x`` to a float array of shape (N, 2)."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError(f"expected points of shape (N, 2), got {arr.shape}")
    return arr


@dataclass(frozen=True, eq=False)
class EmbeddedGraph:
    """Connected planar graph with straight edges.

    ``vertices`` is a (V, 2) float array, ``edges`` a (E, 2) int array of
    vertex indices.  Arrays are copied and frozen on construction.
    """

    vertices: np.ndarray
    edges: np.ndarray
    eps_len: float = EPS_LEN

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float).reshape(-1, 2)
        e = np.array(self.edges, dtype=np.int64).reshape(-1, 2)
        v.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "edges", e)
        self._validate()

    def _validate(self) -> None:
        v, e = self.vertices, self.edges
        if not np.all(np.isfinite(v)):
            raise ValidationError("vertex coordinates must be finite")
        nv = len(v)
        for k, (i, j) in enumerate(e):
            if not (0 <= i < nv and 0 <= j < nv):
                raise ValidationError(f"edge {k} = ({i}, {j}) references a missing vertex (have {nv})")
            if i == j:
                raise ValidationError(f"edge {k} = ({i}, {j}) is a self-loop")
        if len(e):
            key = np.sort(e, axis=1)
            uniq, counts = np.unique(key, axis=0, return_counts=True)
            if np.any(counts > 1):
                i, j = uniq[np.argmax(counts > 1)]
                raise ValidationError(f"duplicate edge ({i}, {j})")
            short = np.flatnonzero(self.edge_lengths < self.eps_len)
            if len(short):
                k = int(short[0])
                raise ValidationError(
                    f"edge {k} has length {self.edge_lengths[k]:.3e} < eps_len={self.eps_len:g}"
                )
        if nv > 1:
            n_comp, _ = connected_components(self.adjacency, directed=False)
            if n_comp != 1:
                raise ValidationError(f"graph is not connected ({n_comp} components)")

    @classmethod
    def empty(cls) -> "EmbeddedGraph":
        return cls(np.zeros((0, 2)), np.zeros((0, 2), dtype=np.int64))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_vectors(self) -> np.ndarray:
        return self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        return np.hypot(self.edge_vectors[:, 0], self.edge_vectors[:, 1])

    @cached_property
    def degree(self) -> np.ndarray:
        return np.bincount(self.edges.ravel(), minlength=self.n_vertices)

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        nv = self.n_vertices
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(i))
        return sparse.csr_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(nv, nv))

    @cached_property
    def _incidence(self) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
        ne, nv = self.n_edges, self.n_vertices
        rows = np.arange(ne)
        ones = np.ones(ne)
        ia = sparse.csr_matrix((ones, (rows, self.edges[:, 0])), shape=(ne, nv))
        ib = sparse.csr_matrix((ones, (rows, self.edges[:, 1])), shape=(ne, nv))
        return ia, ib

    def neighbors(self, v: int) -> list[tuple[int, int]]:
        """(edge id, other vertex) pairs incident to vertex ``v``."""
        out = []
        for k, (i, j) in enumerate(self.edges):
            if i == v:
                out.append((k, int(j)))
            elif j == v:
                out.append((k, int(i)))
        return out

    def diameter(self) -> float:
        """Diagonal of the bounding box (0 for an empty or single-point graph)."""
        if self.n_vertices == 0:
            return 0.0
        span = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.hypot(*span))

    def default_ridge_tol(self) -> float:
        return RIDGE_TOL_REL * max(self.diameter(), 1e-300)

    def moved(self, displacement) -> "EmbeddedGraph":
        """Same topology with every vertex shifted by ``displacement`` (V, 2)."""
        d = np.asarray(displacement, dtype=float)
        return EmbeddedGraph(self.vertices + d, self.edges, self.eps_len)

    def transformed(self, rotation: np.ndarray, shift) -> "EmbeddedGraph":
        """Rigid image ``x -> R x + shift``."""
        rot = np.asarray(rotation, dtype=float)
        return EmbeddedGraph(self.vertices @ rot.T + np.asarray(shift, float), self.edges, self.eps_len)

    def split_edge(self, edge_id: int, param: float) -> tuple["EmbeddedGraph", int]:
        """Insert a vertex at ``param`` along ``edge_id``; return (graph, new vertex id)."""
        if not 0.0 < param < 1.0:
            raise ValidationError(f"split parameter must lie in (0, 1), got {param}")
        a, b = self.edges[edge_id]
        p = self.vertices[a] + param * (self.vertices[b] - self.vertices[a])
        nv = self.n_vertices
        verts = np.vstack([self.vertices, p])
        edges = [tuple(e) for k, e in enumerate(self.edges.tolist()) if k != edge_id]
        edges += [(int(a), nv), (nv, int(b))]
        return EmbeddedGraph(verts, edges, self.eps_len), nv

    def to_dict(self) -> dict:
        return {"vertices": self.vertices.tolist(), "edges": self.edges.tolist()}


def graph_length(g: EmbeddedGraph) -> float:
    """One-dimensional Hausdorff measure of the graph: sum of edge lengths."""
    return float(np.sum(g.edge_lengths))


def polyline(points, closed: bool = False, eps_len: float = EPS_LEN) -> EmbeddedGraph:
    """Graph through ``points`` in order, optionally closing the loop."""
    pts = as_points(points)
    n = len(pts)
    edges = [(i, i + 1) for i in range(n - 1)]
    if closed:
        if n < 3:
            raise ValidationError("a closed polyline needs at least 3 points")
        edges.append((n - 1, 0))
    return EmbeddedGraph(pts, edges, eps_len)


def arc_polyline(center, radius: float, angle_start: float, angle_end: float, n: int) -> np.ndarray:
    """``n + 1`` points equally spaced in angle along a circular arc.

    Endpoints are evaluated with the same formula as interior points, so two
    arcs sharing an end angle share bit-identical end coordinates.
    """
    if int(n) != n or n < 1:
        raise ValidationError(f"arc needs n >= 1 segments, got {n}")
    if not radius > 0:
        raise ValidationError(f"arc radius must be positive, got {radius}")
    c = np.asarray(center, dtype=float)
    theta = np.linspace(angle_start, angle_end, int(n) + 1)
    return np.column_stack([c[0] + radius * np.cos(theta), c[1] + radius * np.sin(theta)])


def regular_polygon(center, radius: float, n: int, phase: float = 0.0) -> EmbeddedGraph:
    """Closed ``n``-gon inscribed in the circle of given center and radius."""
    pts = arc_polyline(center, radius, phase, phase + 2 * math.pi, n)[:-1]
    return polyline(pts, closed=True)


@dataclass(frozen=True)
class ProjectionResult:
    """Nearest-point data for a single query point."""

    edge_id: int
    param: float
    foot: np.ndarray
    distance: float
    direction: np.ndarray | None  # None when the point lies on the graph
    multiplicity: int
    margin: float


@dataclass
class Projection:
    """Batched nearest-point data; one row per query point.

    ``direction`` rows are zero where ``defined`` is False (point on the
    graph).  ``multiplicity``, ``margin`` and ``second_foot`` are only filled
    in detail mode.
    """

    edge_id: np.ndarray
    param: np.ndarray
    foot: np.ndarray
    distance: np.ndarray
    direction: np.ndarray
    defined: np.ndarray
    multiplicity: np.ndarray | None = None
    margin: np.ndarray | None = None
    second_foot: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.distance)

    def subset(self, mask: np.ndarray) -> "Projection":
        pick = lambda a: None if a is None else a[mask]
        return Projection(
            self.edge_id[mask], self.param[mask], self.foot[mask], self.distance[mask],
            self.direction[mask], self.defined[mask], pick(self.multiplicity),
            pick(self.margin), pick(self.second_foot),
        )


def project_points(
    points,
    g: EmbeddedGraph,
    ridge_tol: float | None = None,
    detail: bool = False,
    dist_floor: float = 0.0,
) -> Projection:
    """Project every point onto ``g``.

    Ties in distance go to the smallest edge id.  With ``detail=True`` the
    multiplicity counts distinct local-minimum feet whose distance is within
    ``ridge_tol * (1 + d)`` of the minimum ``d``, and the margin is the gap
    from the minimum to the next distinct local minimum (``inf`` if none).
    """
    pts = as_points(points)
    if g.n_edges == 0:
        raise ValidationError("cannot project onto a graph without edges")
    if ridge_tol is None:
        ridge_tol = g.default_ridge_tol()
    if ridge_tol < 0:
        raise ValidationError("ridge_tol must be non-negative")

    n, ne = len(pts), g.n_edges
    edge_id = np.empty(n, dtype=np.int64)
    param = np.empty(n)
    foot = np.empty((n, 2))
    d2_best = np.empty(n)
    if detail:
        mult = np.ones(n, dtype=np.int64)
        margin = np.full(n, np.inf)
        second = np.full((n, 2), np.nan)

    a = g.vertices[g.edges[:, 0]]
    dvec = g.edge_vectors
    inv_len2 = 1.0 / np.einsum("ij,ij->i", dvec, dvec)
    chunk = max(32, _CHUNK_ENTRIES // max(ne + (g.n_vertices if detail else 0), 1))

    for s in range(0, n, chunk):
        p = pts[s:s + chunk]
        wx = p[:, :1] - a[:, 0]
        wy = p[:, 1:] - a[:, 1]
        t_raw = (wx * dvec[:, 0] + wy * dvec[:, 1]) * inv_len2
        t = np.clip(t_raw, 0.0, 1.0)
        rx = t * dvec[:, 0] - wx
        ry = t * dvec[:, 1] - wy
        d2 = rx * rx + ry * ry
        k = np.argmin(d2, axis=1)
        rows = np.arange(len(p))
        tk = t[rows, k]
        edge_id[s:s + chunk] = k
        param[s:s + chunk] = tk
        foot[s:s + chunk] = a[k] + tk[:, None] * dvec[k]
        d2_best[s:s + chunk] = d2[rows, k]
        if detail:
            m, mg, sf = _local_minima(p, g, t_raw, d2, ridge_tol)
            mult[s:s + chunk] = m
            margin[s:s + chunk] = mg
            second[s:s + chunk] = sf

    distance = np.sqrt(d2_best)
    defined = distance > dist_floor
    direction = np.zeros_like(foot)
    direction[defined] = (foot[defined] - pts[defined]) / distance[defined, None]
    out = Projection(edge_id, param, foot, distance, direction, defined)
    if detail:
        out.multiplicity, out.margin, out.second_foot = mult, margin, second
    return out


def _local_minima(p, g, t_raw, d2, ridge_tol):
    """Multiplicity, margin and runner-up foot from local minima of distance along g."""
    ne = g.n_edges
    interior = (t_raw > 0.0) & (t_raw < 1.0)
    edge_cand = np.where(interior, d2, np.inf)
    ia, ib = g._incidence
    # a vertex is a local minimum iff every incident edge clamps onto it
    clamps = np.asarray((t_raw <= 0.0).astype(float) @ ia + (t_raw >= 1.0).astype(float) @ ib)
    vert_local = clamps == g.degree[None, :]
    dvx = p[:, :1] - g.vertices[:, 0]
    dvy = p[:, 1:] - g.vertices[:, 1]
    vert_cand = np.where(vert_local, dvx * dvx + dvy * dvy, np.inf)
    cand = np.sqrt(np.concatenate([edge_cand, vert_cand], axis=1))

    n = len(p)
    rows = np.arange(n)
    if cand.shape[1] > 1:
        two = np.argpartition(cand, 1, axis=1)[:, :2]
    else:
        two = np.zeros((n, 2), dtype=np.int64)
    d_two = cand[rows[:, None], two]
    order = np.argsort(d_two, axis=1, kind="stable")
    i_best = two[rows, order[:, 0]]
    i_second = two[rows, order[:, 1]]
    d_best = cand[rows, i_best]
    d_second = cand[rows, i_second]

    a = g.vertices[g.edges[:, 0]]

    def feet_of(idx, rws):
        out = np.empty((len(idx), 2))
        on_edge = idx < ne
        e = idx[on_edge]
        out[on_edge] = a[e] + t_raw[rws[on_edge], e][:, None] * g.edge_vectors[e]
        out[~on_edge] = g.vertices[idx[~on_edge] - ne]
        return out

    f_best = feet_of(i_best, rows)
    f_second = feet_of(i_second, rows)
    margin = d_second - d_best
    second = np.where(np.isfinite(d_second)[:, None], f_second, np.nan)
    mult = np.ones(n, dtype=np.int64)

    near = cand <= (d_best * (1.0 + ridge_tol) + ridge_tol)[:, None]
    sep = np.hypot(*(f_second - f_best).T)
    tricky = (near.sum(axis=1) > 1) | (np.isfinite(d_second) & (sep <= ridge_tol))
    for r in np.flatnonzero(tricky):
        idx = np.flatnonzero(np.isfinite(cand[r]))
        idx = idx[np.argsort(cand[r, idx], kind="stable")]
        feet = feet_of(idx, np.full(len(idx), r))
        clusters = [0]
        for q in range(1, len(idx)):
            if all(np.hypot(*(feet[q] - feet[c])) > ridge_tol for c in clusters):
                clusters.append(q)
        mult[r] = sum(1 for c in clusters if near[r, idx[c]])
        if len(clusters) > 1:
            c2 = clusters[1]
            margin[r] = cand[r, idx[c2]] - cand[r, idx[0]]
            second[r] = feet[c2]
        else:
            margin[r] = np.inf
            second[r] = np.nan
    return mult, margin, second


def project(x, g: EmbeddedGraph, ridge_tol: float | None = None) -> ProjectionResult:
    """Nearest point of ``g`` to the single point ``x``."""
    pr = project_points(np.asarray(x, float).reshape(1, 2), g, ridge_tol, detail=True)
    d = float(pr.distance[0])
    return ProjectionResult(
        edge_id=int(pr.edge_id[0]),
        param=float(pr.param[0]),
        foot=pr.foot[0].copy(),
        distance=d,
        direction=pr.direction[0].copy() if pr.defined[0] else None,
        multiplicity=int(pr.multiplicity[0]),
        margin=float(pr.margin[0]),
    )


def locate_on_graph(x, g: EmbeddedGraph, tol: float | None = None) -> tuple[int, float]:
    """Edge id and parameter of a point lying on ``g`` (within ``tol``)."""
    if tol is None:
        tol = 1e-9 * max(g.diameter(), 1.0)
    pr = project_points(np.asarray(x, float).reshape(1, 2), g)
    if pr.distance[0] > tol:
        raise ValidationError(f"point {list(map(float, np.ravel(x)))} is not on the graph "
                              f"(distance {pr.distance[0]:.3e})")
    return int(pr.edge_id[0]), float(pr.param[0])


def segment_distance(points, a, b) -> np.ndarray:
    """Distance from each point to the segment [a, b]."""
    p = as_points(points)
    a = np.asarray(a, float)
    d = np.asarray(b, float) - a
    w = p - a
    t = np.clip(w @ d / float(d @ d), 0.0, 1.0)
    r = t[:, None] * d - w
    return np.hypot(r[:, 0], r[:, 1])


def rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])

