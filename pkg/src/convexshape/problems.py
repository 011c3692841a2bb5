"""Problem descriptors, constraint/objective assembly and run orchestration.

A descriptor is a JSON document (``schema_version`` 1) naming the
parametrization, grid size, one functional, a list of linear constraint
families, the start, optimizer settings and FEM resolution.  Bundled
presets live in ``presets/``.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, fem
from . import functionals as F
from . import support as S
from .gauge import GaugeVector, vertices_gauge
from .geometry import ConvexPolygon, polygon_area, polygon_perimeter
from .optimizer import NlpProblem, SolveReport, initialize, solve
from .shapes import Shape, shape_from_dict

SCHEMA_VERSION = 1
GAUGE_MIN = 1e-3  # keeps 1/gamma bounded in gauge-based runs
PRESET_DIR = Path(__file__).parent / "presets"

PARAMETRIZATIONS = ("support", "gauge", "polar-pair")
FUNCTIONALS = {
    "area": {"mode"},
    "perimeter": {"mode"},
    "area_perimeter": {"mu"},
    "mahler": set(),
    "eigenvalue": {"k", "normalization", "smoothing"},
    "pde_integral": {"source"},
    "quadratic": {"target"},
}
CONSTRAINTS = {
    "convexity": {"mode"},
    "width": {"lower", "upper"},
    "constant_width": {"width"},
    "diameter": {"value"},
    "inclusion": {"outer", "inner"},
    "box": {"lower", "upper"},
    "symmetry": set(),
    "centering": set(),
    "scale": {"mean"},
}
SUPPORT_ONLY = {"width", "constant_width", "diameter", "centering"}
EVEN_N = {"width", "constant_width", "diameter", "symmetry"}
OPTIMIZER_KEYS = {"tol_kkt", "tol_feas", "max_iter", "max_evals", "hessian", "mu_factor"}
INIT_KEYS = {"radius", "perturbation", "harmonics"}
FEM_KEYS = {"level", "h_ratio", "report_h_ratio"}
TOP_KEYS = {"schema_version", "name", "description", "parametrization", "n", "functional",
            "constraints", "init", "optimizer", "fem", "seeds", "penalty"}


class DescriptorError(ValueError):
    """Validation failure; ``path`` locates the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _require(cond, path, message):
    if not cond:
        raise DescriptorError(path, message)


def _check_keys(obj, allowed, path):
    _require(isinstance(obj, dict), path, "expected an object")
    extra = sorted(set(obj) - set(allowed))
    _require(not extra, f"{path}.{extra[0]}" if extra else path, "unknown field")


def _number(v, path, positive=False, allow_none=False):
    if v is None and allow_none:
        return None
    _require(isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v),
             path, "expected a finite number")
    if positive:
        _require(v > 0, path, "must be positive")
    return float(v)


def _shape(v, path):
    if v is None:
        return None
    try:
        return shape_from_dict(v)
    except (TypeError, ValueError, KeyError) as exc:
        raise DescriptorError(path, f"invalid shape: {exc}") from exc


@dataclass
class ProblemDescriptor:
    name: str
    parametrization: str
    n: int
    functional: dict
    constraints: list
    init: dict = field(default_factory=dict)
    optimizer: dict = field(default_factory=dict)
    fem: dict = field(default_factory=dict)
    seeds: list = field(default_factory=lambda: [0])
    penalty: dict | None = None
    description: str = ""

    @classmethod
    def from_dict(cls, d: dict) -> "ProblemDescriptor":
        _check_keys(d, TOP_KEYS, "$")
        _require(d.get("schema_version") == SCHEMA_VERSION, "$.schema_version",
                 f"expected {SCHEMA_VERSION}")
        name = d.get("name", "problem")
        _require(isinstance(name, str) and name, "$.name", "expected a non-empty string")
        par = d.get("parametrization")
        _require(par in PARAMETRIZATIONS, "$.parametrization", f"expected one of {PARAMETRIZATIONS}")
        n = d.get("n")
        _require(isinstance(n, int) and not isinstance(n, bool) and n >= 5, "$.n",
                 "expected an integer >= 5")

        fn = d.get("functional")
        _require(isinstance(fn, dict), "$.functional", "expected exactly one functional object")
        fname = fn.get("name")
        _require(fname in FUNCTIONALS, "$.functional.name", f"expected one of {sorted(FUNCTIONALS)}")
        _check_keys(fn, FUNCTIONALS[fname] | {"name", "maximize"}, "$.functional")
        _require((fname == "mahler") == (par == "polar-pair"), "$.functional.name",
                 "the mahler functional goes with the polar-pair parametrization")
        if fname == "eigenvalue":
            k = fn.get("k", 1)
            _require(isinstance(k, int) and k >= 1, "$.functional.k", "expected an integer >= 1")
            _require(fn.get("normalization", "times_area") in ("times_area", "raw"),
                     "$.functional.normalization", "expected times_area or raw")
            if "smoothing" in fn:
                _number(fn["smoothing"], "$.functional.smoothing", positive=True)
                _require(fn["smoothing"] >= 1, "$.functional.smoothing", "expected an exponent >= 1")
                _require(not fn.get("maximize", False), "$.functional.smoothing",
                         "smoothing applies to minimization only")
        if fname == "area_perimeter":
            _number(fn.get("mu"), "$.functional.mu", positive=True)
        if fname == "pde_integral":
            _require(fn.get("source", "f1") in F.SOURCES, "$.functional.source",
                     f"expected one of {sorted(F.SOURCES)}")
        if fname in ("perimeter", "area_perimeter") or (fname == "area" and par != "support"):
            _require(par == "support", "$.parametrization", f"{fname} needs the support parametrization")

        cons = d.get("constraints", [])
        _require(isinstance(cons, list), "$.constraints", "expected a list")
        for j, c in enumerate(cons):
            path = f"$.constraints[{j}]"
            _require(isinstance(c, dict) and c.get("type") in CONSTRAINTS, f"{path}.type",
                     f"expected one of {sorted(CONSTRAINTS)}")
            t = c["type"]
            _check_keys(c, CONSTRAINTS[t] | {"type"}, path)
            if t in SUPPORT_ONLY:
                _require(par == "support", path, f"{t} needs the support parametrization")
            if t in EVEN_N:
                _require(n % 2 == 0, "$.n", f"{t} constraints need an even n")
            if t == "convexity":
                _require(c.get("mode", "rigorous") == "rigorous", f"{path}.mode",
                         "solvers only accept the rigorous convexity rows")
            if t == "width":
                lo = _number(c.get("lower"), f"{path}.lower", allow_none=True)
                hi = _number(c.get("upper"), f"{path}.upper", allow_none=True)
                _require(lo is not None or hi is not None, path, "give lower and/or upper")
                if lo is not None and hi is not None:
                    _require(lo <= hi, path, "lower width exceeds upper width")
            if t == "constant_width":
                _number(c.get("width"), f"{path}.width", positive=True)
            if t == "diameter":
                _number(c.get("value"), f"{path}.value", positive=True)
            if t == "inclusion":
                _require("outer" in c or "inner" in c, path, "give outer and/or inner")
                _shape(c.get("outer"), f"{path}.outer")
                _shape(c.get("inner"), f"{path}.inner")
            if t == "box":
                _number(c.get("lower"), f"{path}.lower", allow_none=True)
                _number(c.get("upper"), f"{path}.upper", allow_none=True)
            if t == "scale":
                _number(c.get("mean"), f"{path}.mean", positive=True)

        init = d.get("init", {})
        _check_keys(init, INIT_KEYS, "$.init")
        if "radius" in init:
            _number(init["radius"], "$.init.radius", positive=True)
        opt = d.get("optimizer", {})
        _check_keys(opt, OPTIMIZER_KEYS, "$.optimizer")
        if "hessian" in opt:
            _require(opt["hessian"] in ("fd", "sr1", "bfgs"), "$.optimizer.hessian", "expected fd, sr1 or bfgs")
        femd = d.get("fem", {})
        _check_keys(femd, FEM_KEYS, "$.fem")
        seeds = d.get("seeds", [0])
        _require(isinstance(seeds, list) and seeds and all(isinstance(s, int) for s in seeds),
                 "$.seeds", "expected a non-empty list of integers")
        pen = d.get("penalty")
        if pen is not None:
            _check_keys(pen, {"area", "weight"}, "$.penalty")
            _number(pen.get("area"), "$.penalty.area", positive=True)
            _number(pen.get("weight"), "$.penalty.weight", positive=True)
        return cls(name, par, n, dict(fn), [dict(c) for c in cons], dict(init), dict(opt),
                   dict(femd), list(seeds), pen, d.get("description", ""))

    def to_dict(self) -> dict:
        d = {"schema_version": SCHEMA_VERSION, "name": self.name, "description": self.description,
             "parametrization": self.parametrization, "n": self.n, "functional": self.functional,
             "constraints": self.constraints, "init": self.init, "optimizer": self.optimizer,
             "fem": self.fem, "seeds": self.seeds}
        if self.penalty is not None:
            d["penalty"] = self.penalty
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def is_fem(self) -> bool:
        return self.functional["name"] in ("eigenvalue", "pde_integral")

    @property
    def maximize(self) -> bool:
        return bool(self.functional.get("maximize", False))


def list_presets() -> list[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.json"))


def load_descriptor(source) -> ProblemDescriptor:
    """Load from a dict, a JSON file path, or a bundled preset name."""
    if isinstance(source, dict):
        return ProblemDescriptor.from_dict(source)
    path = Path(source)
    if not path.exists():
        preset = PRESET_DIR / f"{source}.json"
        if not preset.exists():
            raise DescriptorError("$", f"no descriptor file or preset named {source!r}")
        path = preset
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DescriptorError("$", f"malformed JSON: {exc}") from exc
    return ProblemDescriptor.from_dict(data)


# -- assembly ----------------------------------------------------------------

def _polygon_normals(shape: Shape):
    if shape.kind not in ("square", "triangle", "polygon"):
        return None
    P = shape._corners()
    e = np.roll(P, -1, axis=0) - P
    return np.arctan2(-e[:, 0], e[:, 1])


def _on_grid(angles, n):
    h = 2 * np.pi / n
    r = np.mod(angles, 2 * np.pi) / h
    return np.all(np.abs(r - np.round(r)) < 1e-9)


def _inclusion(c: dict, n: int, parametrization: str) -> S.LinearConstraintSet:
    outer, inner = _shape(c.get("outer"), ""), _shape(c.get("inner"), "")
    th = S.grid(n)
    if parametrization == "support":
        normals = _polygon_normals(outer) if outer is not None else None
        if normals is not None and not _on_grid(normals, n):
            normals = None
        return S.inclusion_constraints(outer, inner, n, edge_normals=normals)
    # gauge values: K inside Q  <=>  gamma_i >= gamma_Q(theta_i)
    lower = outer.gauge(th) if outer is not None else None
    upper = inner.gauge(th) if inner is not None else None
    return S.inclusion_constraints(upper, lower, n)


def build_constraints(desc: ProblemDescriptor) -> S.LinearConstraintSet:
    n = desc.n
    C = S.convexity_constraints(n, "rigorous")
    if desc.parametrization != "support":
        C = C + S.box_constraints(n, GAUGE_MIN, None)
    for c in desc.constraints:
        t = c["type"]
        if t == "convexity":
            continue
        if t == "width":
            lo, hi = c.get("lower"), c.get("upper")
            C = C + S.width_constraints(n, np.nan if lo is None else lo, np.nan if hi is None else hi)
        elif t == "constant_width":
            C = C + S.constant_width(n, c["width"])
        elif t == "diameter":
            C = C + S.diameter_constraint(n, c["value"])
        elif t == "inclusion":
            C = C + _inclusion(c, n, desc.parametrization)
        elif t == "box":
            C = C + S.box_constraints(n, c.get("lower"), c.get("upper"))
        elif t == "symmetry":
            C = C + S.symmetry_constraints(n)
        elif t == "centering":
            C = C + S.centering_constraints(n)
        elif t == "scale":
            C = C + S.mean_constraint(n, c["mean"])
    return C


def shape_polygon(desc: ProblemDescriptor, x, check: bool = True) -> ConvexPolygon:
    """The realized shape: the gauge polygon for gauge runs, else the support polygon."""
    if desc.parametrization == "gauge":
        return vertices_gauge(GaugeVector(x), check)
    return S.vertices(S.SupportVector(x), check)


def fem_level(desc: ProblemDescriptor, x0) -> int:
    if desc.fem.get("level") is not None:
        return int(desc.fem["level"])
    P = shape_polygon(desc, x0)
    return fem.refinement_level(P, P.diameter() / desc.fem.get("h_ratio", 40))


def build_objective(desc: ProblemDescriptor, level: int | None = None) -> F.Functional:
    fn = desc.functional
    opts = {k: v for k, v in fn.items() if k not in ("name", "maximize")}
    par = "support" if desc.parametrization == "polar-pair" else desc.parametrization
    if desc.is_fem:
        opts["level"] = level
    func = F.make_functional(fn["name"], desc.n, par, maximize=desc.maximize, **opts)
    if desc.penalty is None:
        return func
    target, weight = desc.penalty["area"], desc.penalty["weight"]
    inner = func.fn

    def penalized(x):
        v, g = inner(x)
        if desc.parametrization == "gauge":
            a, ga = F.gauge_chain_area(x)
        else:
            a, ga = F.area_functional(x, check=False)
        # the penalty is added in minimization form whatever the sign of the functional
        s = func.sign
        return v + s * weight * (a - target) ** 2, g + s * 2 * weight * (a - target) * ga

    return F.Functional(func.name, func.parametrization, func.n, penalized, func.sign,
                        func.options, func.is_fem)


# -- running ------------------------------------------------------------------

@dataclass
class RunResult:
    descriptor: ProblemDescriptor
    report: SolveReport
    x: np.ndarray
    vertices: np.ndarray
    metrics: dict
    seed: int
    runs: list
    seconds: float

    @property
    def success(self) -> bool:
        return self.report.success

    def to_dict(self) -> dict:
        rep = self.report.to_dict()
        rep["fun"] = self.metrics["objective"]
        return {
            "schema_version": SCHEMA_VERSION,
            "success": self.success,
            "descriptor": self.descriptor.to_dict(),
            "report": rep,
            "x": self.x.tolist(),
            "vertices": self.vertices.tolist(),
            "metrics": self.metrics,
            "runs": self.runs,
            "provenance": {"descriptor_sha256": self.descriptor.digest(), "seed": self.seed,
                           "version": __version__, "seconds": self.seconds},
        }


def width_profile(P: ConvexPolygon, samples: int = 4096):
    th = np.concatenate([np.linspace(0, np.pi, samples, endpoint=False), np.mod(P.edge_normal_angles(), np.pi)])
    w = P.support(th) + P.support(th + np.pi)
    return float(w.min()), float(w.max())


def compute_metrics(desc: ProblemDescriptor, x, level: int | None = None) -> dict:
    x = np.asarray(x, dtype=float)
    P = shape_polygon(desc, x, check=False)
    wmin, wmax = width_profile(P)
    m = {"area": polygon_area(P), "perimeter": polygon_perimeter(P), "diameter": P.diameter(),
         "width_min": wmin, "width_max": wmax}
    fn = desc.functional
    if desc.parametrization == "polar-pair":
        Q = vertices_gauge(GaugeVector(x), check=False)
        m["polar_area"] = polygon_area(Q)
        m["objective"] = m["area"] * m["polar_area"]
    elif not desc.is_fem:
        m["objective"] = float(build_objective(desc).raw(x))
    else:
        h_report = P.diameter() / desc.fem.get("report_h_ratio", 80)
        fine = fem.refinement_level(P, h_report)
        levels = [fine - 1, fine]
        if fn["name"] == "eigenvalue":
            k = fn.get("k", 1)
            norm = fn.get("normalization", "times_area")
            vals, spectra = [], []
            for L in levels:
                info = {}
                v, _ = F.eigenvalue_functional(x, k, norm, desc.parametrization,
                                               F.FEMSettings(level=L), info=info)
                vals.append(v)
                spectra.append(info["eigenvalues"])
            m["eigenvalues"] = [float(e) for e in spectra[-1]]
            m["eigen_derivative_sign"] = F.EIGEN_DERIVATIVE_SIGN
        else:
            vals = [F.pde_integral_functional(x, fn.get("source", "f1"), desc.parametrization,
                                              F.FEMSettings(level=L))[0] for L in levels]
        m["objective_levels"] = {str(L): v for L, v in zip(levels, vals)}
        m["objective"] = fem.extrapolate(vals[0], vals[1])
        if level is not None:
            m["optimization_level"] = level
    if desc.penalty is not None:
        m["area_target"] = desc.penalty["area"]
    return {k: (float(v) if isinstance(v, (np.floating, float, int)) and not isinstance(v, bool) else v)
            for k, v in m.items()}


def run_problem(desc: ProblemDescriptor, seed: int | None = None, callback=None) -> RunResult:
    """Solve once per seed (or only ``seed``) and keep the best terminal point."""
    t0 = time.perf_counter()
    C = build_constraints(desc)
    seeds = [seed] if seed is not None else desc.seeds
    par = desc.parametrization
    opt = dict(desc.optimizer)
    if desc.is_fem:
        opt.setdefault("tol_kkt", 1e-4)
    best, runs = None, []
    for s in seeds:
        x0 = initialize(C, "gauge" if par == "gauge" else "support", seed=s, **desc.init)
        level = fem_level(desc, x0) if desc.is_fem else None
        obj = build_objective(desc, level)
        rep = solve(NlpProblem(obj, C, x0=x0, seed=s, callback=callback, **opt))
        runs.append({"seed": s, "status": rep.status, "fun": obj.sign * rep.fun,
                     "iterations": rep.iterations})
        key = (rep.success, -rep.fun)
        if best is None or key > best[0]:
            best = (key, rep, s, level, obj)
    _, rep, s, level, obj = best
    rep.fun = obj.sign * rep.fun
    metrics = compute_metrics(desc, rep.x, level)
    P = shape_polygon(desc, rep.x, check=False)
    return RunResult(desc, rep, rep.x, P.vertices.copy(), metrics, s, runs,
                     time.perf_counter() - t0)


def recheck_result(result: dict, tol: float = 1e-10) -> list[str]:
    """Recompute area and perimeter from stored vertices; return mismatch messages."""
    V = np.asarray(result["vertices"], dtype=float)
    from .geometry import polygon
    P = polygon(V)
    problems = []
    for key, value in (("area", polygon_area(P)), ("perimeter", polygon_perimeter(P))):
        stored = result["metrics"][key]
        if abs(stored - value) > tol * max(1.0, abs(value)):
            problems.append(f"{key}: stored {stored!r}, recomputed {value!r}")
    return problems
