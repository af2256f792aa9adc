"""Compliance of a crack Sigma in a rectangle, on a uniform node grid.

u solves -Lap u = f on free nodes with u = 0 on the outer boundary and on
every node within h/2 of Sigma.  The compliance is int f u + lam * length.
Moving Sigma by X changes it at the rate

    int_Sigma (g_plus^2 - g_minus^2) <X, n> ds - lam <H, X>

where n is the left normal of each edge, g_minus is the normal derivative
on the side n points to and g_plus the one on the other side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg, splu

from .errors import GeometryError, SolverError, ValidationError
from .geometry import EmbeddedGraph, graph_length, project_points
from .variation import OnSigmaField, curvature_pairing


@dataclass(frozen=True, eq=False)
class GridPoissonProblem:
    """Nodes x0 + i h, y0 + j h; arrays are indexed [j, i]."""

    domain: tuple[float, float, float, float]
    h: float
    f: np.ndarray
    dirichlet_mask: np.ndarray

    def __post_init__(self):
        x0, y0, x1, y1 = self.domain
        if not self.h > 0 or not (x1 > x0 and y1 > y0):
            raise ValidationError("grid needs h > 0 and a non-empty domain")
        shape = self.shape
        f = np.broadcast_to(np.asarray(self.f, float), shape).copy()
        if not np.all(np.isfinite(f)):
            raise ValidationError("source values must be finite")
        mask = np.asarray(self.dirichlet_mask, bool).copy()
        if mask.shape != shape:
            raise ValidationError(f"mask shape {mask.shape} does not match grid {shape}")
        if not (mask[0].all() and mask[-1].all() and mask[:, 0].all() and mask[:, -1].all()):
            raise ValidationError("mask must cover the whole outer boundary")
        f.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "dirichlet_mask", mask)

    @property
    def shape(self) -> tuple[int, int]:
        x0, y0, x1, y1 = self.domain
        return _n_cells(y1 - y0, self.h) + 1, _n_cells(x1 - x0, self.h) + 1

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        ny, nx = self.shape
        x0, y0 = self.domain[:2]
        return x0 + self.h * np.arange(nx), y0 + self.h * np.arange(ny)

    @classmethod
    def create(cls, domain, h: float, f=1.0, graph: EmbeddedGraph | None = None) -> "GridPoissonProblem":
        domain = tuple(float(v) for v in domain)
        base = boundary_mask(domain, h)
        xs = domain[0] + h * np.arange(base.shape[1])
        ys = domain[1] + h * np.arange(base.shape[0])
        if callable(f):
            X, Y = np.meshgrid(xs, ys)
            f = f(X, Y)
        mask = base if graph is None else base | rasterize(graph, domain, h)
        return cls(domain, h, f, mask)

    def with_graph(self, graph: EmbeddedGraph | None) -> "GridPoissonProblem":
        mask = boundary_mask(self.domain, self.h)
        if graph is not None:
            mask = mask | rasterize(graph, self.domain, self.h)
        return GridPoissonProblem(self.domain, self.h, self.f, mask)


def _n_cells(extent: float, h: float) -> int:
    n = extent / h
    if abs(n - round(n)) > 1e-9 * max(1.0, n):
        raise ValidationError(f"domain extent {extent} is not a multiple of h={h}")
    return int(round(n))


def boundary_mask(domain, h: float) -> np.ndarray:
    x0, y0, x1, y1 = domain
    mask = np.zeros((_n_cells(y1 - y0, h) + 1, _n_cells(x1 - x0, h) + 1), bool)
    mask[0] = mask[-1] = True
    mask[:, 0] = mask[:, -1] = True
    return mask


def rasterize(g: EmbeddedGraph, domain, h: float) -> np.ndarray:
    """Nodes within h/2 of the graph (outer boundary not included)."""
    x0, y0, x1, y1 = domain
    shape = (_n_cells(y1 - y0, h) + 1, _n_cells(x1 - x0, h) + 1)
    mask = np.zeros(shape, bool)
    if g.n_vertices == 0:
        return mask
    v = g.vertices
    slack = 1e-9 * h
    if (v[:, 0].min() < x0 - slack or v[:, 0].max() > x1 + slack
            or v[:, 1].min() < y0 - slack or v[:, 1].max() > y1 + slack):
        raise ValidationError("graph leaves the domain rectangle")
    # only nodes in the graph's bounding box (plus h) can be masked
    i0 = max(0, int(math.floor((v[:, 0].min() - x0) / h)) - 1)
    i1 = min(shape[1] - 1, int(math.ceil((v[:, 0].max() - x0) / h)) + 1)
    j0 = max(0, int(math.floor((v[:, 1].min() - y0) / h)) - 1)
    j1 = min(shape[0] - 1, int(math.ceil((v[:, 1].max() - y0) / h)) + 1)
    xs = x0 + h * np.arange(i0, i1 + 1)
    ys = y0 + h * np.arange(j0, j1 + 1)
    X, Y = np.meshgrid(xs, ys)
    d = project_points(np.column_stack([X.ravel(), Y.ravel()]), g).distance
    mask[j0:j1 + 1, i0:i1 + 1] = (d <= 0.5 * h * (1 + 1e-9)).reshape(X.shape)
    return mask


@dataclass(frozen=True, eq=False)
class GridSolution:
    u: np.ndarray
    residual: float
    iterations: int
    tol: float
    method: str


def _free_system(p: GridPoissonProblem):
    """5-point matrix scaled by h^2 on free nodes, with their flat indices."""
    ny, nx = p.shape
    free = ~p.dirichlet_mask
    idx = -np.ones(p.shape, dtype=np.int64)
    nfree = int(free.sum())
    idx[free] = np.arange(nfree)
    rows, cols, vals = [np.arange(nfree)], [np.arange(nfree)], [np.full(nfree, 4.0)]
    J, I = np.nonzero(free)
    for dj, di in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        jj, ii = J + dj, I + di
        nb = idx[jj, ii]  # boundary is masked, so neighbours stay in range
        ok = nb >= 0
        rows.append(idx[J[ok], I[ok]])
        cols.append(nb[ok])
        vals.append(-np.ones(int(ok.sum())))
    A = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(nfree, nfree))
    return A, free


def laplacian_residual(u: np.ndarray, p: GridPoissonProblem) -> np.ndarray:
    """f + Lap_h u on free nodes (zero on masked ones)."""
    lap = np.zeros_like(u)
    lap[1:-1, 1:-1] = (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2] - 4 * u[1:-1, 1:-1]) / p.h**2
    r = p.f + lap
    r[p.dirichlet_mask] = 0.0
    return r


def solve_poisson(p: GridPoissonProblem, tol: float = 1e-10, method: str = "direct",
                  maxiter: int = 20000) -> GridSolution:
    """Solve the masked 5-point problem; the relative residual bound is checked either way."""
    if not tol > 0:
        raise ValidationError("tol must be positive")
    A, free = _free_system(p)
    b = p.h**2 * p.f[free]
    u = np.zeros(p.shape)
    iterations = 0
    if A.shape[0]:
        if method == "direct":
            x = splu(A.tocsc()).solve(b)
            iterations = 1
        elif method == "cg":
            count = [0]

            def tick(_):
                count[0] += 1

            x, info = cg(A, b, rtol=tol * 0.1, atol=0.0, maxiter=maxiter, callback=tick)
            iterations = count[0]
            if info > 0:
                res = float(np.max(np.abs(b - A @ x)) / p.h**2)
                raise SolverError(f"CG did not converge in {maxiter} iterations", residual=res)
        else:
            raise ValidationError(f"unknown method {method!r}")
        u[free] = x
    scale = max(float(np.max(np.abs(p.f))), np.finfo(float).tiny)
    res = float(np.max(np.abs(laplacian_residual(u, p)))) / scale
    if res > tol:
        raise SolverError(f"relative residual {res:.3e} exceeds tol {tol:g}", residual=res)
    u.setflags(write=False)
    return GridSolution(u, res, iterations, tol, method)


def compliance_value(sol: GridSolution, p: GridPoissonProblem, lam: float = 0.0,
                     g: EmbeddedGraph | None = None) -> float:
    length = graph_length(g) if g is not None and g.n_edges else 0.0
    return float(p.h**2 * np.sum(sol.u * p.f)) + lam * length


def dirichlet_energy(u: np.ndarray) -> float:
    """Sum of squared differences over grid edges (the 5-point energy)."""
    return float(np.sum(np.diff(u, axis=0) ** 2) + np.sum(np.diff(u, axis=1) ** 2))


def dual_gap(sol: GridSolution | np.ndarray, p: GridPoissonProblem) -> float:
    """|(2 int f u - int |grad u|^2) - int f u| for the discrete energy."""
    u = sol.u if isinstance(sol, GridSolution) else np.asarray(sol, float)
    fu = float(p.h**2 * np.sum(p.f * u))
    return abs((2 * fu - dirichlet_energy(u)) - fu)


def dual_gap_scale(sol: GridSolution, p: GridPoissonProblem) -> float:
    """Bound factor: the gap is at most tol times this for a solve at relative residual tol."""
    return float(p.h**2 * np.sum(np.abs(sol.u)) * np.max(np.abs(p.f)))


def richardson(coarse: float, fine: float, order: float = 2.0) -> float:
    """Extrapolate values at h and h/2 assuming error ~ h^order."""
    r = 2.0**order
    return (r * fine - coarse) / (r - 1.0)


def bilinear(u: np.ndarray, p: GridPoissonProblem, pts: np.ndarray) -> np.ndarray:
    x0, y0 = p.domain[:2]
    ny, nx = u.shape
    gx = (pts[:, 0] - x0) / p.h
    gy = (pts[:, 1] - y0) / p.h
    i = np.clip(np.floor(gx).astype(int), 0, nx - 2)
    j = np.clip(np.floor(gy).astype(int), 0, ny - 2)
    tx, ty = gx - i, gy - j
    return ((1 - tx) * (1 - ty) * u[j, i] + tx * (1 - ty) * u[j, i + 1]
            + (1 - tx) * ty * u[j + 1, i] + tx * ty * u[j + 1, i + 1])


@dataclass
class JumpProfile:
    s: np.ndarray
    weights: np.ndarray
    jump: np.ndarray
    g_plus: np.ndarray
    g_minus: np.ndarray
    normal: np.ndarray
    params: np.ndarray

    def rows(self) -> list[tuple[float, float]]:
        return list(zip(self.s.tolist(), self.jump.tolist()))


def stations(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Edge parameters and weights (summing to 1) from the map t = (1 - cos tau)/2.

    Midpoints in tau cluster toward both ends, and the Jacobian sin(tau)/2
    absorbs inverse-square-root growth at crack tips.
    """
    if n < 1:
        raise ValidationError("need at least one station")
    tau = (np.arange(n) + 0.5) * math.pi / n
    return 0.5 * (1 - np.cos(tau)), 0.5 * np.sin(tau) * math.pi / n


def normal_jump(sol: GridSolution, p: GridPoissonProblem, g: EmbeddedGraph, edge_id: int,
                samples: int = 64) -> JumpProfile:
    """(g_plus^2 - g_minus^2) at stations along one edge.

    One-sided derivatives use the quadratic through u at distances h, 2h, 3h
    along the normal, extrapolated to the edge: (-5/2 u1 + 4 u2 - 3/2 u3)/h.
    """
    if not 0 <= edge_id < g.n_edges:
        raise ValidationError(f"edge {edge_id} out of range")
    a, b = g.vertices[g.edges[edge_id]]
    L = float(g.edge_lengths[edge_id])
    tvec = (b - a) / L
    n = np.array([-tvec[1], tvec[0]])
    t, w = stations(samples)
    base = a + t[:, None] * (b - a)
    h = p.h
    x0, y0, x1, y1 = p.domain
    offsets = h * np.array([1.0, 2.0, 3.0])
    derivs = {}
    for side, sgn in (("minus", 1.0), ("plus", -1.0)):
        pts = base[:, None, :] + sgn * offsets[None, :, None] * n
        flat = pts.reshape(-1, 2)
        if (flat[:, 0].min() < x0 + h or flat[:, 0].max() > x1 - h
                or flat[:, 1].min() < y0 + h or flat[:, 1].max() > y1 - h):
            raise GeometryError(f"edge {edge_id} needs three free node layers on each side")
        vals = bilinear(sol.u, p, flat).reshape(pts.shape[:2])
        # derivative of u moving away from the edge; u grows into the free region
        derivs[side] = (-2.5 * vals[:, 0] + 4.0 * vals[:, 1] - 1.5 * vals[:, 2]) / h
    gp, gm = derivs["plus"], derivs["minus"]
    return JumpProfile(t * L, w * L, gp**2 - gm**2, gp, gm, n, t)


def shape_derivative(sol: GridSolution, p: GridPoissonProblem, g: EmbeddedGraph, lam: float,
                     X: OnSigmaField, samples: int = 64) -> dict:
    """Jump-formula derivative of the compliance along X."""
    X.check(g)
    pde = 0.0
    for e in range(g.n_edges):
        prof = normal_jump(sol, p, g, e, samples)
        xs = X.at(g, np.full(len(prof.params), e), prof.params)
        pde += float(np.sum(prof.weights * prof.jump * (xs @ prof.normal)))
    curv = curvature_pairing(g, X)
    return {"pde_term": pde, "curvature_term": curv, "total": pde - lam * curv}


@dataclass
class FDComplianceOracle:
    value: float
    half_step_value: float
    noise: float
    eps: float

    def as_dict(self) -> dict:
        return {"value": self.value, "half_step_value": self.half_step_value,
                "noise": self.noise, "eps": self.eps}


def compliance_of(p: GridPoissonProblem, g: EmbeddedGraph, lam: float, tol: float = 1e-10) -> float:
    q = p.with_graph(g)
    return compliance_value(solve_poisson(q, tol), q, lam, g)


def fd_compliance_oracle(p: GridPoissonProblem, g: EmbeddedGraph, lam: float, X: OnSigmaField,
                         eps: float, tol: float = 1e-10) -> FDComplianceOracle:
    """Central difference with full re-rasterization at +-eps and a +-eps/2 noise probe."""
    if eps < 2 * p.h * (1 - 1e-9):
        raise ValidationError(f"eps={eps} must be at least 2h={2 * p.h} for the mask to move")
    X.check(g)

    def central(e):
        return (compliance_of(p, g.moved(e * X.values), lam, tol)
                - compliance_of(p, g.moved(-e * X.values), lam, tol)) / (2 * e)

    full = central(eps)
    half = central(0.5 * eps)
    return FDComplianceOracle(full, half, abs(full - half), eps)
