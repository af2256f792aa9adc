"""Fixed-topology steepest descent on vertex positions."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .errors import ValidationError
from .geometry import EmbeddedGraph, graph_length, project_points
from .measure import QuadratureMeasure
from .variation import functional_value, shape_gradient

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DescentConfig:
    step0: float = 1.0
    backtrack: float = 0.5
    growth: float = 1.5
    max_iters: int = 200
    quad_h: float = 0.01
    resample_every: int = 0
    target_edge_len: float | None = None
    stop_residual: float = 1e-3
    min_step: float = 1e-12
    armijo: float = 1e-4
    metric: str = "sobolev"
    sobolev_scale: float = 0.1

    def __post_init__(self):
        if self.metric not in ("sobolev", "euclidean"):
            raise ValidationError(f"metric must be 'sobolev' or 'euclidean', got {self.metric!r}")
        if not self.sobolev_scale > 0:
            raise ValidationError("sobolev_scale must be positive")
        if not self.step0 > 0 or not self.quad_h > 0 or not self.stop_residual > 0:
            raise ValidationError("step0, quad_h and stop_residual must be positive")
        if not 0 < self.backtrack < 1:
            raise ValidationError(f"backtrack factor must lie in (0, 1), got {self.backtrack}")
        if self.growth < 1:
            raise ValidationError("growth factor must be >= 1")
        if self.max_iters < 0 or self.resample_every < 0:
            raise ValidationError("max_iters and resample_every must be non-negative")
        if self.resample_every and not (self.target_edge_len and self.target_edge_len > 0):
            raise ValidationError("resampling needs a positive target_edge_len")


@dataclass
class Iterate:
    graph: EmbeddedGraph
    F: float
    residual_norm: float
    step: float


@dataclass
class Trajectory:
    iterates: list[Iterate] = field(default_factory=list)
    converged: bool = False
    message: str = ""
    diagnostics: list[str] = field(default_factory=list)

    @property
    def final(self) -> Iterate:
        return self.iterates[-1]

    @property
    def F_values(self) -> np.ndarray:
        return np.array([it.F for it in self.iterates])

    @property
    def residuals(self) -> np.ndarray:
        return np.array([it.residual_norm for it in self.iterates])

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.F_values) <= 0))


def _chains(g: EmbeddedGraph) -> tuple[list[int], list[list[int]]]:
    """Split g into maximal chains of degree-2 vertices between anchor vertices."""
    deg = g.degree
    anchors = [v for v in range(g.n_vertices) if deg[v] != 2]
    if not anchors:
        anchors = [0]
    is_anchor = np.zeros(g.n_vertices, bool)
    is_anchor[anchors] = True
    seen = np.zeros(g.n_edges, bool)
    chains = []
    for a in anchors:
        for e, w in g.neighbors(a):
            if seen[e]:
                continue
            seen[e] = True
            chain = [a, w]
            cur_e, cur = e, w
            while not is_anchor[cur]:
                cur_e, cur = next((k, u) for k, u in g.neighbors(cur) if k != cur_e)
                seen[cur_e] = True
                chain.append(cur)
            chains.append(chain)
    return anchors, chains


def resample(g: EmbeddedGraph, target_edge_len: float) -> EmbeddedGraph:
    """Re-divide every degree-2 chain into equal-arclength pieces of about the target length.

    Endpoints and branch vertices keep their exact coordinates; new vertices
    lie on the old polyline.
    """
    if not target_edge_len > g.eps_len:
        raise ValidationError(f"target edge length must exceed {g.eps_len}")
    anchors, chains = _chains(g)
    index = {a: i for i, a in enumerate(anchors)}
    verts = [g.vertices[a] for a in anchors]
    edges = []
    used_pairs = set()
    for chain in chains:
        pts = g.vertices[chain]
        seg = np.hypot(*np.diff(pts, axis=0).T)
        cum = np.r_[0.0, np.cumsum(seg)]
        total = cum[-1]
        closed = chain[0] == chain[-1]
        m = max(1, int(round(total / target_edge_len)))
        pair = tuple(sorted((chain[0], chain[-1])))
        if closed:
            m = max(m, 3)
        elif m == 1 and pair in used_pairs:
            m = 2
        if m == 1:
            used_pairs.add(pair)
        s = total * np.arange(1, m) / m
        j = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seg) - 1)
        t = (s - cum[j]) / seg[j]
        inner = pts[j] + t[:, None] * (pts[j + 1] - pts[j])
        ids = [index[chain[0]]]
        for p in inner:
            verts.append(p)
            ids.append(len(verts) - 1)
        ids.append(index[chain[-1]])
        edges.extend(zip(ids[:-1], ids[1:]))
    return EmbeddedGraph(np.asarray(verts), edges, g.eps_len)


def sobolev_direction(g: EmbeddedGraph, grad: np.ndarray, scale: float) -> np.ndarray:
    """Solve (M + s^2 K) d = grad with lumped edge mass M and graph Laplacian K.

    s = scale * diameter.  The hat gradient of a fine polyline is dominated by
    the vertex-to-vertex stiffness of the length term; smoothing it this way
    keeps the step size tied to the shape rather than the edge length.
    """
    L = g.edge_lengths
    a, b = g.edges[:, 0], g.edges[:, 1]
    n = g.n_vertices
    mass = np.bincount(a, L / 2, n) + np.bincount(b, L / 2, n)
    w = 1.0 / L
    K = sparse.coo_matrix((np.r_[w, w, -w, -w], (np.r_[a, b, a, b], np.r_[a, b, b, a])), shape=(n, n))
    s2 = (scale * g.diameter()) ** 2
    A = (sparse.diags(mass) + s2 * K).tocsc()
    return np.asarray(spsolve(A, grad)).reshape(grad.shape)


def minimize(g0: EmbeddedGraph, mu: QuadratureMeasure, lam: float, cfg: DescentConfig | None = None) -> Trajectory:
    """Steepest descent on the hat-basis gradient with Armijo backtracking.

    With ``metric="sobolev"`` the search direction is the gradient measured in
    an H1-type metric (see sobolev_direction), which is still a descent
    direction; ``"euclidean"`` uses the raw gradient.  The quadrature is held
    fixed, so F is a deterministic function of the vertex positions.  Resampling is kept only when it does not raise F.
    """
    cfg = cfg or DescentConfig()
    traj = Trajectory()
    g = g0
    pr = project_points(mu.points, g)
    F = functional_value(g, mu, lam, pr)
    grad = shape_gradient(g, mu, lam, projection=pr)
    step = cfg.step0
    used = 0.0
    for it in range(cfg.max_iters + 1):
        res = float(np.max(np.abs(grad))) if grad.size else 0.0
        traj.iterates.append(Iterate(g, F, res, used))
        if res <= cfg.stop_residual:
            traj.converged = True
            traj.message = f"residual {res:.3e} <= {cfg.stop_residual:g} after {it} steps"
            break
        if it == cfg.max_iters:
            traj.message = f"max_iters={cfg.max_iters} reached with residual {res:.3e}"
            break
        if cfg.metric == "sobolev":
            direction = sobolev_direction(g, grad, cfg.sobolev_scale)
        else:
            direction = grad
        gg = float(np.sum(grad * direction))
        while True:
            try:
                trial = g.moved(-step * direction)
            except ValidationError:
                trial = None
            if trial is not None:
                pr_t = project_points(mu.points, trial)
                F_t = functional_value(trial, mu, lam, pr_t)
                if F_t <= F - cfg.armijo * step * gg:
                    break
            step *= cfg.backtrack
            if step < cfg.min_step:
                traj.message = f"line search failed at step {step:.1e} (residual {res:.3e})"
                traj.diagnostics.append(traj.message)
                return traj
        g, F, pr, used = trial, F_t, pr_t, step
        step *= cfg.growth
        if cfg.resample_every and (it + 1) % cfg.resample_every == 0:
            g_r = resample(g, cfg.target_edge_len)
            pr_r = project_points(mu.points, g_r)
            F_r = functional_value(g_r, mu, lam, pr_r)
            if F_r <= F:
                g, F, pr = g_r, F_r, pr_r
            else:
                traj.diagnostics.append(f"iteration {it + 1}: resample skipped (F would rise by {F_r - F:.2e})")
        grad = shape_gradient(g, mu, lam, projection=pr)
        log.debug("iter %d F=%.10g residual=%.3e step=%.3e", it + 1, F, res, used)
    return traj


def mean_radius(g: EmbeddedGraph, center=(0.0, 0.0)) -> float:
    d = g.vertices - np.asarray(center, float)
    return float(np.mean(np.hypot(d[:, 0], d[:, 1])))


def length_change(g_old: EmbeddedGraph, g_new: EmbeddedGraph) -> float:
    """Relative change in total length."""
    return abs(graph_length(g_new) - graph_length(g_old)) / graph_length(g_old)
