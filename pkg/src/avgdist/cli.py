"""Command-line runner: ``adf <verb> --scene file.yaml [options]``.

Every run writes one JSON report with the keys inputs, results, refinement,
warnings and timing; optionally a CSV table and an SVG figure.
"""

from __future__ import annotations

import argparse
import ast
import csv
import hashlib
import json
import logging
import math
import operator
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from . import __version__
from .compliance import (
    GridPoissonProblem,
    compliance_value,
    dual_gap,
    dual_gap_scale,
    fd_compliance_oracle,
    normal_jump,
    richardson,
    shape_derivative,
    solve_poisson,
)
from .constructions import (
    CornerParams,
    Scene,
    corner_domain,
    corner_nonstationary_test,
    gamma_threshold,
    h_of_phi,
    rect_height_lhs,
    stadium_domain,
    stationary_circle,
    wedge_set,
)
from .errors import AvgDistError, ValidationError
from .geometry import EmbeddedGraph, graph_length, project_points
from .measure import (
    AnnularSector,
    Disk,
    Polygon,
    QuadratureMeasure,
    Rectangle,
    Region,
    Union,
    discretize_region,
    from_points,
)
from .optimize import DescentConfig, mean_radius, minimize
from .variation import (
    OnSigmaField,
    curvature_atoms,
    fd_variation_oracle,
    first_variation,
    functional_value,
    loop_cut_probe,
    shape_gradient,
    slope_probe,
    stationarity_residual,
    stationarity_tolerance,
)

log = logging.getLogger("avgdist")

VERBS = ("eval", "variation", "check", "optimize", "slope", "loopcut", "corner-math",
         "compliance-solve", "compliance-derivative")


class SceneParseError(ValidationError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        where = f"line {line}, column {column}: " if line is not None else ""
        super().__init__(where + message)
        self.line, self.column = line, column


# ---------------------------------------------------------------- scene files

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


def _eval_expr(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.Name) and node.id == "pi":
        return math.pi
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_expr(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_expr(node.left), _eval_expr(node.right))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id == "sqrt" \
            and len(node.args) == 1:
        return math.sqrt(_eval_expr(node.args[0]))
    raise ValueError("unsupported expression")


def _num(value, path: str) -> float:
    """Number, numeric string ("1e-3") or arithmetic in pi and sqrt ("pi/6")."""
    if isinstance(value, bool):
        raise ValidationError(f"{path}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            pass
        try:
            return float(_eval_expr(ast.parse(value, mode="eval").body))
        except (SyntaxError, ValueError, ZeroDivisionError):
            pass
    raise ValidationError(f"{path}: expected a number, got {value!r}")


def _int(value, path: str) -> int:
    x = _num(value, path)
    if x != int(x):
        raise ValidationError(f"{path}: expected an integer, got {value!r}")
    return int(x)


def _point(value, path: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ValidationError(f"{path}: expected a point [x, y], got {value!r}")
    return _num(value[0], f"{path}[0]"), _num(value[1], f"{path}[1]")


def _mapping(value, path: str, allowed: set[str]) -> dict:
    if not isinstance(value, dict):
        raise ValidationError(f"{path}: expected a mapping, got {type(value).__name__}")
    unknown = sorted(set(map(str, value)) - allowed)
    if unknown:
        raise ValidationError(f"{path}: unknown field(s) {', '.join(unknown)}")
    return value


def _num_list(value, path: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ValidationError(f"{path}: expected a non-empty list of numbers")
    return [_num(v, f"{path}[{i}]") for i, v in enumerate(value)]


def parse_region(spec, path: str = "region") -> Region:
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ValidationError(f"{path}: expected exactly one of disk, rectangle, polygon, sector, union")
    kind, body = next(iter(spec.items()))
    p = f"{path}.{kind}"
    if kind == "disk":
        body = _mapping(body, p, {"center", "radius"})
        return Disk(_point(body.get("center", [0, 0]), f"{p}.center"), _num(body.get("radius"), f"{p}.radius"))
    if kind == "rectangle":
        body = _mapping(body, p, {"min", "max"})
        return Rectangle(_point(body.get("min"), f"{p}.min"), _point(body.get("max"), f"{p}.max"))
    if kind == "polygon":
        body = _mapping(body, p, {"vertices"})
        verts = body.get("vertices")
        if not isinstance(verts, list):
            raise ValidationError(f"{p}.vertices: expected a list of points")
        return Polygon(tuple(_point(v, f"{p}.vertices[{i}]") for i, v in enumerate(verts)))
    if kind == "sector":
        body = _mapping(body, p, {"center", "r_in", "r_out", "angle_start", "angle_end"})
        return AnnularSector(_point(body.get("center", [0, 0]), f"{p}.center"),
                             _num(body.get("r_in", 0), f"{p}.r_in"), _num(body.get("r_out"), f"{p}.r_out"),
                             _num(body.get("angle_start"), f"{p}.angle_start"),
                             _num(body.get("angle_end"), f"{p}.angle_end"))
    if kind == "union":
        if not isinstance(body, list) or not body:
            raise ValidationError(f"{p}: expected a non-empty list of regions")
        return Union(tuple(parse_region(r, f"{p}[{i}]") for i, r in enumerate(body)))
    raise ValidationError(f"{path}: unknown region kind {kind!r}")


def parse_graph(spec, path: str = "graph") -> EmbeddedGraph:
    spec = _mapping(spec, path, {"vertices", "edges", "closed"})
    verts = spec.get("vertices")
    if not isinstance(verts, list):
        raise ValidationError(f"{path}.vertices: expected a list of points")
    pts = np.array([_point(v, f"{path}.vertices[{i}]") for i, v in enumerate(verts)], float).reshape(-1, 2)
    edges = spec.get("edges")
    if edges is None:
        n = len(pts)
        edges = [[i, i + 1] for i in range(n - 1)]
        if spec.get("closed"):
            edges.append([n - 1, 0])
    if not isinstance(edges, list):
        raise ValidationError(f"{path}.edges: expected a list of [i, j] pairs")
    out = []
    for k, e in enumerate(edges):
        if not isinstance(e, (list, tuple)) or len(e) != 2:
            raise ValidationError(f"{path}.edges[{k}]: expected [i, j], got {e!r}")
        i, j = _int(e[0], f"{path}.edges[{k}][0]"), _int(e[1], f"{path}.edges[{k}][1]")
        for v in (i, j):
            if not 0 <= v < len(pts):
                raise ValidationError(f"{path}.edges[{k}]: vertex index {v} out of range 0..{len(pts) - 1}")
        out.append((i, j))
    try:
        return EmbeddedGraph(pts, out)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from exc


_CONSTRUCTIONS = {
    "circle": {"n_arc"},
    "stadium": {"L", "n_seg"},
    "wedge": {"phi", "aperture_deg", "arm_len", "margin", "n_arm"},
    "corner": {"R", "alpha", "k", "n_arc"},
}


def build_construction(spec, lam: float | None, path: str = "construction") -> Scene:
    spec = _mapping(spec, path, {"name", "params"})
    name = spec.get("name")
    if name not in _CONSTRUCTIONS:
        raise ValidationError(f"{path}.name: expected one of {', '.join(_CONSTRUCTIONS)}, got {name!r}")
    params = _mapping(spec.get("params") or {}, f"{path}.params", _CONSTRUCTIONS[name])
    kw = {k: _num(v, f"{path}.params.{k}") for k, v in params.items()}
    for key in ("n_arc", "n_seg", "n_arm"):
        if key in kw:
            kw[key] = _int(kw[key], f"{path}.params.{key}")
    if name != "wedge" and lam is None:
        raise ValidationError(f"{path}: construction {name!r} needs a top-level lambda")
    if name == "circle":
        return stationary_circle(lam, **kw)
    if name == "stadium":
        return stadium_domain(lam, kw.pop("L", 2.0), **kw)
    if name == "wedge":
        if "aperture_deg" in kw:
            kw["phi"] = math.radians(kw.pop("aperture_deg")) / 2
        phi = kw.pop("phi", math.pi / 3)
        if lam is not None:
            kw["lam"] = lam
        return wedge_set(phi, **kw)
    n_arc = kw.pop("n_arc", 512)
    return corner_domain(CornerParams(lam, **kw), n_arc)


_TOP = {"lambda", "construction", "region", "graph", "measure", "tolerances", "field", "probe",
        "optimize", "compliance", "corner_math", "title"}


@dataclass
class SceneFile:
    """Parsed scene document; ``scene`` is None when no region is involved."""

    lam: float | None
    scene: Scene | None
    graph: EmbeddedGraph | None
    measure: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    field_spec: Any = None
    probe: dict = field(default_factory=dict)
    optimize: dict = field(default_factory=dict)
    compliance: dict = field(default_factory=dict)
    corner_math: dict = field(default_factory=dict)
    title: str = ""


def load_yaml(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        raise SceneParseError(str(exc.problem or exc), mark.line + 1 if mark else None,
                              mark.column + 1 if mark else None) from exc
    except yaml.YAMLError as exc:
        raise SceneParseError(str(exc)) from exc


def parse_scene(text: str) -> SceneFile:
    doc = load_yaml(text)
    if doc is None:
        doc = {}
    doc = _mapping(doc, "scene", _TOP)
    lam = _num(doc["lambda"], "lambda") if "lambda" in doc else None
    if lam is not None and lam < 0:
        raise ValidationError(f"lambda: must be non-negative, got {lam}")
    scene = None
    graph = None
    region = parse_region(doc["region"]) if "region" in doc else None
    if "construction" in doc:
        if "graph" in doc:
            raise ValidationError("scene: give either construction or graph, not both")
        scene = build_construction(doc["construction"], lam)
        graph = scene.graph
        if region is not None:
            scene = Scene(scene.graph, region, scene.lam, scene.provenance + " (custom region)",
                          scene.n_arc, scene.params)
    elif "graph" in doc:
        graph = parse_graph(doc["graph"])
        if region is not None:
            scene = Scene(graph, region, lam if lam is not None else 0.0, "scene file")
    measure = _mapping(doc.get("measure") or {}, "measure", {"h", "atoms", "refine"})
    if "h" in measure and "atoms" in measure:
        raise ValidationError("measure: give either h or atoms")
    tol = _mapping(doc.get("tolerances") or {}, "tolerances", {"stationarity", "solver", "stop_residual"})
    sections = {
        "probe": {"attach", "direction", "eps", "vertex"},
        "optimize": {"step0", "backtrack", "growth", "max_iters", "resample_every", "target_edge_len",
                     "stop_residual", "metric", "seed_radius", "n_seed"},
        "compliance": {"domain", "h", "n", "source", "solver", "tol", "richardson", "eps", "samples", "field"},
        "corner_math": {"lambda", "R", "alpha", "k", "phi", "R1", "R2", "gamma_resolution"},
    }
    parsed = {k: _mapping(doc.get(k) or {}, k, allowed) for k, allowed in sections.items()}
    return SceneFile(lam, scene, graph, measure, tol, doc.get("field"), parsed["probe"],
                     parsed["optimize"], parsed["compliance"], parsed["corner_math"], str(doc.get("title", "")))


def parse_field(spec, g: EmbeddedGraph, path: str = "field") -> OnSigmaField:
    if spec is None or spec == "radial":
        return OnSigmaField.radial(g)
    if isinstance(spec, str):
        raise ValidationError(f"{path}: unknown field {spec!r}")
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ValidationError(f"{path}: expected one of radial, constant, hat, vertex, values")
    kind, body = next(iter(spec.items()))
    p = f"{path}.{kind}"
    if kind == "radial":
        body = _mapping(body or {}, p, {"center"})
        return OnSigmaField.radial(g, _point(body.get("center", [0, 0]), f"{p}.center"))
    if kind == "constant":
        return OnSigmaField.constant(g, _point(body, p))
    if kind == "hat":
        body = _mapping(body, p, {"vertex", "axis"})
        v, ax = _int(body.get("vertex"), f"{p}.vertex"), _int(body.get("axis"), f"{p}.axis")
        if not 0 <= v < g.n_vertices or ax not in (0, 1):
            raise ValidationError(f"{p}: vertex {v} / axis {ax} out of range")
        return OnSigmaField.hat(g, v, ax)
    if kind == "vertex":
        body = _mapping(body, p, {"index", "vector"})
        v = _int(body.get("index"), f"{p}.index")
        if not 0 <= v < g.n_vertices:
            raise ValidationError(f"{p}.index: vertex {v} out of range")
        return OnSigmaField.at_vertex(g, v, _point(body.get("vector"), f"{p}.vector"))
    if kind == "values":
        if not isinstance(body, list) or len(body) != g.n_vertices:
            raise ValidationError(f"{p}: expected {g.n_vertices} vectors")
        return OnSigmaField(np.array([_point(v, f"{p}[{i}]") for i, v in enumerate(body)]))
    raise ValidationError(f"{path}: unknown field kind {kind!r}")


# ---------------------------------------------------------------- figures

def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _polyline_svg(pts: np.ndarray, cls: str, closed: bool = False) -> str:
    d = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
    tag = "polygon" if closed else "polyline"
    return f'<{tag} class="{cls}" points="{d}"/>'


def _arrow_svg(p, v, cls: str) -> str:
    q = np.asarray(p) + np.asarray(v)
    return (f'<line class="{cls}" x1="{_fmt(p[0])}" y1="{_fmt(p[1])}" x2="{_fmt(q[0])}" '
            f'y2="{_fmt(q[1])}" marker-end="url(#head)"/>')


def render_svg(graph: EmbeddedGraph | None, region: Region | None = None,
               mu: QuadratureMeasure | None = None, lam: float = 0.0,
               overlays: tuple[str, ...] = (), width: int = 640, title: str = "") -> str:
    """Static figure in scene units with y pointing up.

    Overlays: "quiver" (sample -> nearest point, subsampled), "ridge"
    (samples with near-minimal nearest points farther apart than the grid
    size), "gradient" (negative shape gradient at vertices) and "atoms"
    (-H at vertices with a non-zero curvature atom).
    """
    boxes = []
    if region is not None:
        boxes.append(region.bbox())
    if graph is not None and graph.n_vertices:
        v = graph.vertices
        boxes.append((*v.min(axis=0), *v.max(axis=0)))
    if not boxes:
        boxes.append((0.0, 0.0, 1.0, 1.0))
    b = np.array(boxes)
    x0, y0 = b[:, 0].min(), b[:, 1].min()
    x1, y1 = b[:, 2].max(), b[:, 3].max()
    pad = 0.05 * max(x1 - x0, y1 - y0, 1e-9)
    x0, y0, x1, y1 = x0 - pad, y0 - pad, x1 + pad, y1 + pad
    scale = width / (x1 - x0)
    height = int(math.ceil((y1 - y0) * scale))
    stroke = 1.0 / scale
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<title>{title}</title>" if title else "",
        "<defs><marker id=\"head\" markerWidth=\"6\" markerHeight=\"6\" refX=\"5\" refY=\"3\" "
        "orient=\"auto\"><path d=\"M0,0 L6,3 L0,6 z\" fill=\"context-stroke\"/></marker></defs>",
        "<style>"
        f".region{{fill:#eef3fb;stroke:#6b88b5;stroke-width:{_fmt(stroke)}}}"
        f".sigma{{fill:none;stroke:#111;stroke-width:{_fmt(2.5 * stroke)}}}"
        f".quiver{{stroke:#999;stroke-width:{_fmt(0.6 * stroke)}}}"
        f".grad{{stroke:#c0392b;stroke-width:{_fmt(1.5 * stroke)}}}"
        f".atom{{stroke:#1e8449;stroke-width:{_fmt(1.5 * stroke)}}}"
        ".ridge{fill:#d35400}"
        "</style>",
        # y-up: flip about the horizontal axis after translating
        f'<g transform="matrix({_fmt(scale)},0,0,{_fmt(-scale)},{_fmt(-x0 * scale)},{_fmt(y1 * scale)})">',
    ]
    if region is not None:
        for path in region.boundary_paths():
            out.append(_polyline_svg(path, "region", closed=True))
    if graph is not None:
        for a, c in graph.edges:
            out.append(_polyline_svg(graph.vertices[[a, c]], "sigma"))
    diam = max(x1 - x0, y1 - y0)
    if mu is not None and len(mu) and graph is not None and graph.n_edges:
        h = mu.spacing or 0.02 * diam
        if "quiver" in overlays:
            step = max(1, len(mu) // 400)
            sub = mu.points[::step]
            pr = project_points(sub, graph)
            for p, f in zip(sub, pr.foot):
                out.append(f'<line class="quiver" x1="{_fmt(p[0])}" y1="{_fmt(p[1])}" '
                           f'x2="{_fmt(f[0])}" y2="{_fmt(f[1])}"/>')
        if "ridge" in overlays:
            pr = project_points(mu.points, graph, ridge_tol=h, detail=True)
            r = 0.4 * h
            for p in mu.points[pr.multiplicity > 1]:
                out.append(f'<circle class="ridge" cx="{_fmt(p[0])}" cy="{_fmt(p[1])}" r="{_fmt(r)}"/>')
        if "gradient" in overlays:
            grad = shape_gradient(graph, mu, lam)
            mags = np.hypot(grad[:, 0], grad[:, 1])
            if mags.max() > 0:
                k = 0.1 * diam / mags.max()
                for p, gv in zip(graph.vertices, grad):
                    if np.hypot(*gv) > 1e-3 * mags.max():
                        out.append(_arrow_svg(p, -k * gv, "grad"))
    if "atoms" in overlays and graph is not None and graph.n_edges:
        atoms = curvature_atoms(graph)
        for p, a in zip(graph.vertices, atoms):
            if np.hypot(*a) > 1e-6:
                out.append(_arrow_svg(p, -0.08 * diam * a, "atom"))
    out.append("</g></svg>")
    return "\n".join(s for s in out if s) + "\n"


# ---------------------------------------------------------------- commands

@dataclass
class RunReport:
    verb: str
    inputs: dict
    results: dict = field(default_factory=dict)
    refinement: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    table: list = field(default_factory=list)
    svg: str | None = None

    def document(self) -> dict:
        return {"inputs": self.inputs, "results": self.results, "refinement": self.refinement,
                "warnings": self.warnings, "timing": self.timing}


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _need_scene(sf: SceneFile, verb: str) -> Scene:
    if sf.scene is None:
        raise ValidationError(f"{verb}: scene needs a construction or a graph together with a region")
    return sf.scene


def _lam(sf: SceneFile, opts) -> float:
    if opts.get("lambda") is not None:
        return float(opts["lambda"])
    if sf.scene is not None:
        return sf.scene.lam
    if sf.lam is not None:
        return sf.lam
    raise ValidationError("lambda is not given in the scene or on the command line")


def _measure(sf: SceneFile, scene: Scene, h: float | None = None) -> QuadratureMeasure:
    if h is None and "atoms" in sf.measure:
        atoms = sf.measure["atoms"]
        if not isinstance(atoms, list):
            raise ValidationError("measure.atoms: expected a list")
        items = []
        for i, a in enumerate(atoms):
            a = _mapping(a, f"measure.atoms[{i}]", {"point", "weight"})
            items.append((_point(a.get("point"), f"measure.atoms[{i}].point"),
                          _num(a.get("weight", 1.0), f"measure.atoms[{i}].weight")))
        return from_points(items)
    if h is None:
        h = _num(sf.measure.get("h", 0.01), "measure.h")
    return discretize_region(scene.region, h)


def _ladder(sf: SceneFile, opts) -> list[float]:
    if opts.get("refine"):
        return [float(v) for v in opts["refine"]]
    if "refine" in sf.measure:
        return _num_list(sf.measure["refine"], "measure.refine")
    return []


def _cmd_eval(sf, opts, rep):
    scene = _need_scene(sf, "eval")
    lam = _lam(sf, opts)
    mu = _measure(sf, scene, opts.get("quad_h"))
    avg = functional_value(scene.graph, mu, 0.0)
    rep.results.update({"functional_value": avg + lam * graph_length(scene.graph), "average_distance": avg,
                        "length": graph_length(scene.graph), "lambda": lam, "n_samples": len(mu),
                        "mass": mu.total_mass})
    for h in _ladder(sf, opts):
        m = discretize_region(scene.region, h)
        rep.refinement.append({"h": h, "functional_value": functional_value(scene.graph, m, lam),
                               "mass": m.total_mass})
    rep.table = rep.refinement or [dict(rep.results)]
    return scene, mu, lam


def _cmd_variation(sf, opts, rep):
    scene = _need_scene(sf, "variation")
    lam = _lam(sf, opts)
    mu = _measure(sf, scene, opts.get("quad_h"))
    X = parse_field(sf.field_spec, scene.graph)
    r = first_variation(scene.graph, mu, lam, X)
    step = 1e-5 * scene.graph.diameter()
    fd = fd_variation_oracle(scene.graph, mu, lam, X, step)
    sub = first_variation(scene.graph, mu.subset(fd.kept), lam, X)
    rep.results.update({"first_variation": r.as_dict(), "fd_oracle": fd.as_dict(),
                        "analytic_on_kept": sub.total, "fd_step": step,
                        "fd_relative_error": abs(fd.value - sub.total) / max(abs(sub.total), 1e-300)})
    for h in _ladder(sf, opts):
        m = discretize_region(scene.region, h)
        rep.refinement.append({"h": h, "total": first_variation(scene.graph, m, lam, X).total})
    rep.table = rep.refinement or [{"integral_term": r.integral_term, "curvature_term": r.curvature_term,
                                    "total": r.total}]
    return scene, mu, lam


def _check_tol(sf, opts, h, n_arc):
    if opts.get("tol") is not None:
        return float(opts["tol"])
    if "stationarity" in sf.tolerances:
        return _num(sf.tolerances["stationarity"], "tolerances.stationarity")
    return stationarity_tolerance(h, n_arc)


def _cmd_check(sf, opts, rep):
    scene = _need_scene(sf, "check")
    lam = _lam(sf, opts)
    mu = _measure(sf, scene, opts.get("quad_h"))
    n_arc = scene.n_arc
    r = stationarity_residual(scene.graph, mu, lam, tol=_check_tol(sf, opts, mu.spacing, n_arc), n_arc=n_arc)
    worst = max(r.basis_residuals, key=lambda kv: abs(kv[1]))
    rep.results.update({"residual_norm": r.residual_norm, "verdict": r.verdict, "tolerance": r.tolerance,
                        "worst_field": worst[0], "n_basis": len(r.basis_residuals)})
    rep.warnings.extend(r.warnings)
    for h in _ladder(sf, opts):
        m = discretize_region(scene.region, h)
        rr = stationarity_residual(scene.graph, m, lam, tol=_check_tol(sf, opts, h, n_arc), n_arc=n_arc)
        rep.refinement.append({"h": h, "residual_norm": rr.residual_norm, "tolerance": rr.tolerance,
                               "verdict": rr.verdict})
    if len(rep.refinement) > 1:
        res = [row["residual_norm"] for row in rep.refinement]
        rep.results["refinement_monotone"] = bool(all(b <= a for a, b in zip(res, res[1:])))
    rep.table = rep.refinement or [{"field": k, "residual": v} for k, v in r.basis_residuals]
    return scene, mu, lam


def _cmd_optimize(sf, opts, rep):
    scene = _need_scene(sf, "optimize")
    lam = _lam(sf, opts)
    mu = _measure(sf, scene, opts.get("quad_h"))
    o = dict(sf.optimize)
    g0 = scene.graph
    if "seed_radius" in o:
        n = _int(o.pop("n_seed", g0.n_vertices), "optimize.n_seed")
        r0 = _num(o.pop("seed_radius"), "optimize.seed_radius")
        ang = np.linspace(0, 2 * math.pi, n, endpoint=False)
        g0 = EmbeddedGraph(r0 * np.column_stack([np.cos(ang), np.sin(ang)]),
                           [(i, (i + 1) % n) for i in range(n)])
    else:
        o.pop("n_seed", None)
    kw = {}
    for k, v in o.items():
        if k == "metric":
            kw[k] = str(v)
        elif k in ("max_iters", "resample_every"):
            kw[k] = _int(v, f"optimize.{k}")
        else:
            kw[k] = _num(v, f"optimize.{k}")
    if "stop_residual" in sf.tolerances and "stop_residual" not in kw:
        kw["stop_residual"] = _num(sf.tolerances["stop_residual"], "tolerances.stop_residual")
    cfg = DescentConfig(quad_h=mu.spacing or 0.01, **kw)
    traj = minimize(g0, mu, lam, cfg)
    fin = traj.final
    rep.results.update({"converged": traj.converged, "message": traj.message, "iterations": len(traj.iterates) - 1,
                        "F_initial": traj.iterates[0].F, "F_final": fin.F, "residual_final": fin.residual_norm,
                        "mean_radius": mean_radius(fin.graph), "monotone": traj.is_monotone(),
                        "final_vertices": fin.graph.vertices})
    rep.warnings.extend(traj.diagnostics)
    rep.refinement = [{"iter": i, "F": it.F, "residual_norm": it.residual_norm, "step": it.step}
                      for i, it in enumerate(traj.iterates)]
    rep.table = rep.refinement
    return Scene(fin.graph, scene.region, lam, "optimized", scene.n_arc), mu, lam


def _cmd_slope(sf, opts, rep):
    scene = _need_scene(sf, "slope")
    lam = _lam(sf, opts)
    mu = _measure(sf, scene, opts.get("quad_h"))
    pr = sf.probe
    attach = _point(pr.get("attach", [0, 0]), "probe.attach")
    direction = _point(pr.get("direction", [0, 1]), "probe.direction")
    eps = _num_list(pr.get("eps", [0.1, 0.05, 0.025]), "probe.eps")
    sp = slope_probe(scene.graph, mu, lam, attach, direction, eps)
    rep.results.update({"limit": sp.limit, "lambda": lam, "relative_error": abs(sp.limit - lam) / lam if lam else None})
    rep.refinement = [{"eps": e, "ratio": r} for e, r in sp.rows()]
    empty = slope_probe(scene.graph, QuadratureMeasure.empty(), lam, attach, direction, eps)
    rep.results["empty_measure_ratios"] = empty.ratios
    rep.table = rep.refinement
    return scene, mu, lam


def _cmd_loopcut(sf, opts, rep):
    scene = _need_scene(sf, "loopcut")
    lam = _lam(sf, opts)
    mu = _measure(sf, scene, opts.get("quad_h"))
    v = _int(sf.probe.get("vertex", 0), "probe.vertex")
    eps = _num_list(sf.probe.get("eps", [0.05, 0.025, 0.0125]), "probe.eps")
    lp = loop_cut_probe(scene.graph, mu, lam, v, eps)
    rep.refinement = [{"eps": e, "delta_F": d, "ratio": d / e, "removed_length": L}
                      for e, d, L in zip(lp.eps, lp.delta_F, lp.removed_length)]
    rep.results.update({"lambda": lam, "finest_ratio": float(lp.delta_F[-1] / lp.eps[-1]),
                        "all_negative": bool(np.all(lp.delta_F < 0))})
    rep.table = rep.refinement
    return scene, mu, lam


def _cmd_corner_math(sf, opts, rep):
    c = sf.corner_math
    lam = opts.get("lambda")
    if lam is None:
        lam = _num(c["lambda"], "corner_math.lambda") if "lambda" in c else (sf.lam if sf.lam is not None else 0.125)
    R = _num(c.get("R", 1.0), "corner_math.R")
    alpha = _num(c.get("alpha", math.pi / 6), "corner_math.alpha")
    k = _num(c["k"], "corner_math.k") if "k" in c else None
    phi = _num(c.get("phi", math.pi / 4), "corner_math.phi")
    R1 = _num(c.get("R1", R), "corner_math.R1")
    R2 = _num(c.get("R2", R), "corner_math.R2")
    res = _num(c.get("gamma_resolution", 1e-3), "corner_math.gamma_resolution")
    p = CornerParams(lam, R, alpha, k)
    hh = p.h
    test = corner_nonstationary_test(lam, R1, R2, phi)
    gam = gamma_threshold(res)
    rep.results.update({
        "lambda": lam, "R": R, "alpha": alpha, "phi_corner": p.phi, "k": p.k,
        "b": p.b, "r": p.r, "f_0": float(p.f(0.0)), "f_alpha": float(p.f(alpha)), "R_plus_b": R + p.b,
        "rect_height": hh, "rect_height_residual": rect_height_lhs(p.k, hh) - lam,
        "phi": phi, "h_of_phi": h_of_phi(phi),
        "nonstationary_test": {"R1": R1, "R2": R2, "ratio": test.ratio, "h": test.h, "verdict": test.verdict},
        "gamma_threshold": gam.as_dict(),
    })
    if not gam.roots:
        rep.warnings.append(gam.note)
    rep.table = [{"gamma": g, "g": v} for g, v in zip(gam.gamma, gam.values)]
    return None, None, lam


def _compliance_problem(sf, opts):
    c = sf.compliance
    dom = c.get("domain", [0, 0, 1, 1])
    dom = tuple(_num(v, f"compliance.domain[{i}]") for i, v in enumerate(dom))
    if len(dom) != 4:
        raise ValidationError("compliance.domain: expected [x0, y0, x1, y1]")
    if "h" in c:
        h = _num(c["h"], "compliance.h")
    else:
        h = (dom[2] - dom[0]) / _int(c.get("n", 128), "compliance.n")
    if opts.get("quad_h") is not None:
        h = float(opts["quad_h"])
    src = _num(c.get("source", 1.0), "compliance.source")
    tol = float(opts["tol"]) if opts.get("tol") is not None else _num(
        c.get("tol", sf.tolerances.get("solver", 1e-10)), "compliance.tol")
    return dom, h, src, tol, str(c.get("solver", "direct"))


def _cmd_compliance_solve(sf, opts, rep):
    dom, h, src, tol, method = _compliance_problem(sf, opts)
    lam = opts.get("lambda") if opts.get("lambda") is not None else (sf.lam or 0.0)
    g = sf.graph
    p = GridPoissonProblem.create(dom, h, src, g)
    sol = solve_poisson(p, tol, method)
    C = compliance_value(sol, p, lam, g)
    gap = dual_gap(sol, p)
    rep.results.update({"compliance": C, "max_u": float(sol.u.max()), "solver_residual": sol.residual,
                        "iterations": sol.iterations, "dual_gap": gap, "dual_gap_bound": 10 * tol * dual_gap_scale(sol, p),
                        "h": h, "lambda": lam, "masked_nodes": int(p.dirichlet_mask.sum())})
    if sf.compliance.get("richardson"):
        pc = GridPoissonProblem.create(dom, 2 * h, src, g)
        Cc = compliance_value(solve_poisson(pc, tol, method), pc, lam, g)
        rep.refinement = [{"h": 2 * h, "compliance": Cc}, {"h": h, "compliance": C}]
        rep.results["richardson"] = richardson(Cc, C)
    rep.table = rep.refinement or [{"h": h, "compliance": C}]
    return None, None, lam


def _cmd_compliance_derivative(sf, opts, rep):
    dom, h, src, tol, method = _compliance_problem(sf, opts)
    lam = opts.get("lambda") if opts.get("lambda") is not None else (sf.lam or 0.0)
    g = sf.graph
    if g is None or g.n_edges == 0:
        raise ValidationError("compliance-derivative needs a graph")
    c = sf.compliance
    X = parse_field(c.get("field", sf.field_spec if sf.field_spec is not None else {"constant": [0, 1]}), g,
                    "compliance.field")
    samples = _int(c.get("samples", 64), "compliance.samples")
    eps = _num(c.get("eps", 2 * h), "compliance.eps")
    p = GridPoissonProblem.create(dom, h, src, g)
    sol = solve_poisson(p, tol, method)
    sd = shape_derivative(sol, p, g, lam, X, samples)
    fd = fd_compliance_oracle(p, g, lam, X, eps, tol)
    rel = abs(sd["total"] - fd.value) / max(abs(fd.value), 1e-300)
    rep.results.update({"jump_formula": sd, "fd_oracle": fd.as_dict(), "relative_error": rel, "h": h})
    for e in range(g.n_edges):
        prof = normal_jump(sol, p, g, e, samples)
        rep.table.extend({"edge": e, "s": s, "jump": j, "g_plus": a, "g_minus": b}
                         for s, j, a, b in zip(prof.s, prof.jump, prof.g_plus, prof.g_minus))
    return None, None, lam


_COMMANDS = {
    "eval": _cmd_eval, "variation": _cmd_variation, "check": _cmd_check, "optimize": _cmd_optimize,
    "slope": _cmd_slope, "loopcut": _cmd_loopcut, "corner-math": _cmd_corner_math,
    "compliance-solve": _cmd_compliance_solve, "compliance-derivative": _cmd_compliance_derivative,
}


def digest(text: str, options: dict) -> str:
    body = json.dumps({"scene": text, "options": _jsonable(options)}, sort_keys=True)
    return hashlib.sha256(body.encode()).hexdigest()


def run_command(verb: str, scene_text: str, options: dict | None = None) -> RunReport:
    """Execute one verb on a scene document and return its report."""
    if verb not in _COMMANDS:
        raise ValidationError(f"unknown verb {verb!r}; expected one of {', '.join(VERBS)}")
    options = dict(options or {})
    sf = parse_scene(scene_text)
    rep = RunReport(verb, {"verb": verb, "options": _jsonable(options), "digest": digest(scene_text, options),
                           "title": sf.title, "version": __version__})
    if (options.get("threads") or 1) > 1:
        rep.warnings.append("threads > 1 requested; evaluation is serial (results are identical)")
    t0 = time.perf_counter()
    scene, mu, lam = _COMMANDS[verb](sf, options, rep)
    rep.timing = {"seconds": time.perf_counter() - t0}
    rep.results = _jsonable(rep.results)
    rep.refinement = _jsonable(rep.refinement)
    if options.get("svg"):
        graph = scene.graph if scene is not None else sf.graph
        region = scene.region if scene is not None else None
        overlays = tuple(options.get("overlays") or ("atoms",))
        m = mu if isinstance(mu, QuadratureMeasure) and not mu.atomic else None
        rep.svg = render_svg(graph, region, m, lam or 0.0, overlays, title=f"{verb}: {sf.title}")
    return rep


def write_csv(rows: list[dict], path: Path) -> None:
    rows = _jsonable(rows)
    cols: list[str] = []
    for r in rows:
        cols.extend(k for k in r if k not in cols)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: (json.dumps(v) if isinstance(v, (list, dict)) else v) for k, v in r.items()})


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adf", description="Average-distance functional experiments on planar graphs.")
    ap.add_argument("verb", choices=VERBS)
    ap.add_argument("--scene", type=Path, help="YAML scene file (optional for corner-math)")
    ap.add_argument("--lambda", dest="lam", type=float, help="override the scene's lambda")
    ap.add_argument("--quad-h", type=float, help="override the grid size")
    ap.add_argument("--tol", type=float, help="stationarity or solver tolerance")
    ap.add_argument("--refine", type=float, nargs="+", help="grid sizes for a refinement table")
    ap.add_argument("--out", type=Path, help="JSON report path (default: stdout)")
    ap.add_argument("--csv", type=Path, help="CSV table path")
    ap.add_argument("--svg", type=Path, help="SVG figure path")
    ap.add_argument("--overlay", action="append", choices=("quiver", "ridge", "gradient", "atoms"),
                    help="figure overlay (repeatable)")
    ap.add_argument("--threads", type=int, default=1, help="accepted for compatibility; runs serially")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.scene is None:
            if args.verb != "corner-math":
                raise ValidationError(f"{args.verb} needs --scene")
            text = ""
        else:
            text = args.scene.read_text()
        opts = {"lambda": args.lam, "quad_h": args.quad_h, "tol": args.tol, "refine": args.refine,
                "threads": args.threads, "svg": bool(args.svg), "overlays": args.overlay}
        rep = run_command(args.verb, text, opts)
    except (AvgDistError, ValueError, OSError) as exc:
        print(f"adf: error: {exc}", file=sys.stderr)
        return 1
    doc = json.dumps(rep.document(), indent=2, sort_keys=True)
    if args.out:
        args.out.write_text(doc + "\n")
    else:
        sys.stdout.write(doc + "\n")
    if args.csv:
        write_csv(rep.table, args.csv)
    if args.svg and rep.svg:
        args.svg.write_text(rep.svg)
    for w in rep.warnings:
        log.warning("%s", w)
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
