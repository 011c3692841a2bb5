"""Objective functionals over the parameter vector, with gradients.

Every functional returns ``(value, gradient)``.  Geometric functionals are
differentiated exactly through the (linear) vertex map.  FEM-backed ones
either differentiate the discrete problem exactly on a mesh of fixed
topology (``gradient="discrete"``) or assemble the continuous boundary
density and push it to the parameters (``gradient="boundary"``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import fem
from .gauge import GaugeVector, gradient_transform_gauge, vertices_gauge
from .geometry import (BoundaryDensity, ConvexPolygon, boundary_integral, density_from_function,
                       polygon_area, polygon_perimeter, vertex_loads)
from .support import SupportVector, curvature_radii, grid, tangential_coeffs, vertex_jacobian, vertices

# sign of the Dirichlet eigenvalue shape derivative: lambda'(V) = -int |grad u|^2 V.n
EIGEN_DERIVATIVE_SIGN = -1.0


def _polygon(x, parametrization: str, check: bool = True) -> ConvexPolygon:
    if parametrization == "support":
        return vertices(SupportVector(x), check)
    if parametrization == "gauge":
        return vertices_gauge(GaugeVector(x), check)
    raise ValueError(f"unknown parametrization {parametrization!r}")


def _area_vertex_gradient(P: ConvexPolygon) -> np.ndarray:
    """d|P|/dA_i = 0.5 * rot(A_{i+1} - A_{i-1}), shape (n, 2)."""
    v = P.vertices
    d = np.roll(v, -1, axis=0) - np.roll(v, 1, axis=0)
    return 0.5 * np.stack([d[:, 1], -d[:, 0]], axis=1)


def _perimeter_vertex_gradient(P: ConvexPolygon) -> np.ndarray:
    e = P.edges()
    length = np.hypot(*e.T)
    unit = np.zeros_like(e)
    ok = length > 1e-14 * max(1.0, length.max())
    unit[ok] = e[ok] / length[ok, None]
    return np.roll(unit, 1, axis=0) - unit


def support_chain(vertex_grad: np.ndarray) -> np.ndarray:
    """Pull a per-vertex gradient (n, 2) back to the support parameters."""
    Jx, Jy = vertex_jacobian(vertex_grad.shape[0])
    return Jx.T @ vertex_grad[:, 0] + Jy.T @ vertex_grad[:, 1]


def gauge_chain(vertex_grad: np.ndarray, gamma) -> np.ndarray:
    """Pull a per-vertex gradient back to gauge parameters (dB_i = -r_i / gamma_i^2)."""
    gamma = np.asarray(gamma, dtype=float)
    th = grid(gamma.size)
    return -(vertex_grad[:, 0] * np.cos(th) + vertex_grad[:, 1] * np.sin(th)) / gamma ** 2


def support_density_gradient(P: ConvexPolygon, density: BoundaryDensity,
                             transport: str = "vertex") -> np.ndarray:
    """Gradient of J'(V) = int f V.n for every support parameter.

    transport="hat" uses int f psi_i(theta(x)) dsigma with hats transported
    linearly in arclength; transport="vertex" uses the exact polygon velocity
    of each parameter (three vertices move when p_i moves).
    """
    if transport == "hat":
        return boundary_integral(P, density)
    if transport == "vertex":
        return support_chain(vertex_loads(P, density))
    raise ValueError(f"unknown transport {transport!r}")


# -- geometric functionals ---------------------------------------------------

def area_functional(params, mode: str = "exact", check: bool = True):
    """Area of the support polygon.

    Gradient modes: "exact" (chain rule through the vertex map), "density"
    (f = 1 boundary integral against the hats), "curvature" (rho_i * h) and
    "curvature_raw" (rho_i).
    """
    x = np.asarray(params, dtype=float)
    P = vertices(SupportVector(x), check)
    value = polygon_area(P)
    if mode == "exact":
        grad = support_chain(_area_vertex_gradient(P))
    elif mode == "density":
        grad = boundary_integral(P, density_from_function(P, 1.0))
    elif mode == "curvature":
        grad = curvature_radii(x) * (2 * np.pi / x.size)
    elif mode == "curvature_raw":
        grad = curvature_radii(x)
    else:
        raise ValueError(f"unknown area gradient mode {mode!r}")
    return value, grad


def gauge_area_functional(params, check: bool = True):
    """Area of the gauge polygon: 0.5 sin h sum 1/(gamma_i gamma_{i+1})."""
    g = np.asarray(params, dtype=float)
    if check:
        vertices_gauge(GaugeVector(g))
    h = 2 * np.pi / g.size
    gn = np.roll(g, -1)
    gp = np.roll(g, 1)
    value = 0.5 * np.sin(h) * float(np.sum(1.0 / (g * gn)))
    grad = -0.5 * np.sin(h) * (1.0 / (g ** 2 * gn) + 1.0 / (gp * g ** 2))
    return value, grad


def perimeter_functional(params, mode: str = "exact", tau: float | None = None, check: bool = True):
    """Perimeter of the support polygon.

    mode="exact": sum of edge lengths with its exact gradient (zero-length
    edges contribute a zero subgradient).  mode="segment": h * sum p_i plus the
    jumps q_i - q_{i-1} exceeding tau (default 10 h); gradient 2 pi / n.
    """
    x = np.asarray(params, dtype=float)
    n = x.size
    h = 2 * np.pi / n
    if mode == "exact":
        P = vertices(SupportVector(x), check)
        return polygon_perimeter(P), support_chain(_perimeter_vertex_gradient(P))
    if mode == "segment":
        if tau is None:
            tau = 10 * h
        q = tangential_coeffs(x)
        jump = q - np.roll(q, 1)
        value = h * float(x.sum()) + float(jump[jump > tau].sum())
        return value, np.full(n, 2 * np.pi / n)
    raise ValueError(f"unknown perimeter mode {mode!r}")


def area_perimeter_tradeoff(params, mu: float, check: bool = True):
    """mu * |K| - Per(K)."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    a, ga = area_functional(params, check=check)
    p, gp = perimeter_functional(params, check=check)
    return mu * a - p, mu * ga - gp


def mahler_functional(params, check: bool = True):
    """|K| * |K polar| with K the support polygon and its polar the gauge polygon."""
    x = np.asarray(params, dtype=float)
    if np.any(x <= 0):
        raise ValueError("Mahler parameters must be positive")
    a, ga = area_functional(x, check=check)
    b, gb = gauge_area_functional(x, check=check)
    return a * b, ga * b + a * gb


# -- FEM-backed functionals --------------------------------------------------

@dataclass
class FEMSettings:
    level: int | None = None        # fixed refinement level (preferred inside optimization)
    target_h: float | None = None   # used only when level is None
    density: str = "recovered"
    transport: str = "vertex"
    gradient: str = "discrete"      # or "boundary"

    def mesh(self, P: ConvexPolygon) -> fem.Mesh:
        return fem.mesh_polygon(P, target_h=self.target_h, level=self.level)


def _vertex_to_params(vertex_grad, parametrization, x):
    if parametrization == "support":
        return support_chain(vertex_grad)
    return gauge_chain(vertex_grad, x)


def _density_gradient(P, density, parametrization, x, transport):
    if parametrization == "support":
        return support_density_gradient(P, density, transport)
    return gradient_transform_gauge(density, P, x)


def eigenvalue_functional(params, k: int, normalization: str = "times_area",
                          parametrization: str = "support", settings: FEMSettings | None = None,
                          info: dict | None = None, smoothing: float | None = None):
    """lambda_k (raw) or lambda_k * |K| (times_area) and its gradient.

    With ``smoothing=p`` lambda_k is replaced by the p-norm of
    (lambda_1, ..., lambda_k).  It is smooth where lambda_k is a multiple
    eigenvalue below lambda_{k+1}, and lambda_k <= value <= k^(1/p) lambda_k.
    Only the discrete gradient supports it.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if smoothing is not None and smoothing < 1:
        raise ValueError("smoothing exponent must be >= 1")
    settings = settings or FEMSettings()
    x = np.asarray(params, dtype=float)
    P = _polygon(x, parametrization)
    mesh = settings.mesh(P)
    mats = fem.assemble(mesh)
    pairs = fem.eigs(mesh, k, matrices=mats)
    lam, u = pairs[k - 1]
    if smoothing is not None:
        if settings.gradient != "discrete":
            raise ValueError("smoothing needs the discrete gradient")
        r = np.array([e for e, _ in pairs]) / lam
        norm_r = float(np.sum(r ** smoothing)) ** (1 / smoothing)
        w = (r / norm_r) ** (smoothing - 1)
        node_grad = sum(wj * fem.eigen_node_gradient(mesh, e, uj)
                        for wj, (e, uj) in zip(w, pairs) if wj > 1e-14)
        lam = lam * norm_r
        glam = _vertex_to_params(fem.node_to_vertex_gradient(mesh, P, node_grad), parametrization, x)
    elif settings.gradient == "discrete":
        vg = fem.node_to_vertex_gradient(mesh, P, fem.eigen_node_gradient(mesh, lam, u))
        glam = _vertex_to_params(vg, parametrization, x)
    elif settings.gradient == "boundary":
        dens = fem.boundary_gradient_density(mesh, u, method=settings.density, matrices=mats)
        dens = BoundaryDensity(dens.edge, dens.s, dens.weight, EIGEN_DERIVATIVE_SIGN * dens.value,
                               dens.n_edges)
        glam = _density_gradient(P, dens, parametrization, x, settings.transport)
    else:
        raise ValueError(f"unknown gradient method {settings.gradient!r}")
    if info is not None:
        info["eigenvalues"] = [e for e, _ in pairs]
        info["level"] = mesh.level
    if normalization == "raw":
        return lam, glam
    if normalization != "times_area":
        raise ValueError(f"unknown normalization {normalization!r}")
    if parametrization == "support":
        area, garea = area_functional(x, check=False)
    else:
        area, garea = polygon_area(P), gauge_chain(_area_vertex_gradient(P), x)
    return lam * area, area * glam + lam * garea


def source_f1(pts):
    x, y = pts[..., 0], pts[..., 1]
    return 20 * (x + 0.4 - y ** 2) ** 2 + x ** 2 + y ** 2 - 1


_BW_N = 5
_Y = np.array([[np.sin((i + 0.5) * 2 * np.pi / _BW_N), np.cos((i + 0.5) * 2 * np.pi / _BW_N)]
               for i in range(_BW_N)])
_Z = 1.2 * np.array([[np.sin(i * 2 * np.pi / _BW_N), np.cos(i * 2 * np.pi / _BW_N)]
                     for i in range(_BW_N)])


def source_f2(pts):
    x, y = pts[..., 0], pts[..., 1]
    out = -0.5 + 0.8 * (x ** 2 + y) ** 2
    for yc in _Y:
        out = out + 2 * np.exp(-8 * ((x - yc[0]) ** 2 + (y - yc[1]) ** 2))
    for zc in _Z:
        out = out - np.exp(-8 * ((x - zc[0]) ** 2 + (y - zc[1]) ** 2))
    return out


SOURCES = {
    "f1": source_f1,
    "f2": source_f2,
    "minus_one": lambda pts: -np.ones(pts.shape[:-1]),
}


def pde_integral_functional(params, source: str = "f1", parametrization: str = "support",
                            settings: FEMSettings | None = None):
    """J(K) = int_K u with -Laplace u = f, u = 0 on the boundary.

    The adjoint solves -Laplace q = -1 and the boundary density is
    -d_n u d_n q (the j = u term vanishes on the boundary).
    """
    settings = settings or FEMSettings()
    f = SOURCES[source] if isinstance(source, str) else source
    x = np.asarray(params, dtype=float)
    P = _polygon(x, parametrization)
    mesh = settings.mesh(P)
    mats = fem.assemble(mesh)
    u = fem.solve_poisson(mesh, f, matrices=mats)
    value = float(np.ones(len(mesh.nodes)) @ (mats[1] @ u.values))
    if settings.gradient == "discrete":
        vg = fem.node_to_vertex_gradient(mesh, P, fem.integral_node_gradient(mesh, u, f))
        return value, _vertex_to_params(vg, parametrization, x)
    if settings.gradient != "boundary":
        raise ValueError(f"unknown gradient method {settings.gradient!r}")
    q = fem.solve_poisson(mesh, -1.0, matrices=mats)
    dens = fem.boundary_gradient_density(mesh, u, q, method=settings.density, matrices=mats)
    return value, _density_gradient(P, dens, parametrization, x, settings.transport)


# -- registry ----------------------------------------------------------------

@dataclass
class Functional:
    """A named objective in minimization form.

    ``sign`` is +1 for minimization and -1 for maximization; ``__call__``
    returns sign * (value, gradient) and ``raw`` the original-sign value.
    """

    name: str
    parametrization: str
    n: int
    fn: object
    sign: float = 1.0
    options: dict = field(default_factory=dict)
    is_fem: bool = False

    def __call__(self, x):
        v, g = self.fn(np.asarray(x, dtype=float))
        return self.sign * v, self.sign * np.asarray(g)

    def raw(self, x) -> float:
        return self.fn(np.asarray(x, dtype=float))[0]


def make_functional(name: str, n: int, parametrization: str = "support", maximize: bool = False,
                    **opts) -> Functional:
    """Build a Functional from a name and options (used by problem descriptors)."""
    sign = -1.0 if maximize else 1.0
    settings = None
    if name in ("eigenvalue", "pde_integral"):
        settings = FEMSettings(level=opts.get("level"), target_h=opts.get("target_h"),
                               density=opts.get("density", "recovered"),
                               transport=opts.get("transport", "vertex"),
                               gradient=opts.get("gradient", "discrete"))
    if name == "area":
        if parametrization == "support":
            fn = lambda x: area_functional(x, mode=opts.get("mode", "exact"))  # noqa: E731
        else:
            fn = lambda x: gauge_chain_area(x)  # noqa: E731
    elif name == "perimeter":
        fn = lambda x: perimeter_functional(x, mode=opts.get("mode", "exact"))  # noqa: E731
    elif name == "area_perimeter":
        fn = lambda x: area_perimeter_tradeoff(x, opts["mu"])  # noqa: E731
    elif name == "mahler":
        fn = mahler_functional
        parametrization = "pair"
    elif name == "eigenvalue":
        fn = lambda x: eigenvalue_functional(  # noqa: E731
            x, opts.get("k", 1), opts.get("normalization", "times_area"), parametrization, settings,
            smoothing=opts.get("smoothing"))
    elif name == "pde_integral":
        fn = lambda x: pde_integral_functional(  # noqa: E731
            x, opts.get("source", "f1"), parametrization, settings)
    elif name == "quadratic":
        target = np.asarray(opts.get("target", 1.0), dtype=float)
        fn = lambda x: (float(np.sum((x - target) ** 2)), 2 * (x - target))  # noqa: E731
    else:
        raise ValueError(f"unknown functional {name!r}")
    return Functional(name, parametrization, n, fn, sign, dict(opts, settings=settings),
                      is_fem=name in ("eigenvalue", "pde_integral"))


def gauge_chain_area(x):
    P = vertices_gauge(GaugeVector(x))
    return polygon_area(P), gauge_chain(_area_vertex_gradient(P), x)
