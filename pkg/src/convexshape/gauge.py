"""Discrete gauge functions and polar pairs.

The gauge polygon has vertices B_i = r_i / gamma_i on the radial grid.  Its
rigorous convexity rows coincide with the support-function rows, so one
positive parameter vector describes both a support polygon K and a gauge
polygon that approximates the polar body of K.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import BoundaryDensity, ConvexPolygon, vertex_loads
from .shapes import Shape, shape_from_dict
from .support import (InfeasibleParameters, LinearConstraintSet, SupportVector,
                      convexity_constraints, feas_tol, grid, vertices)


@dataclass(frozen=True)
class GaugeVector:
    values: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size < 5:
            raise ValueError(f"need at least 5 grid angles, got {v.size}")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("gauge values must be finite and positive")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "n", v.size)

    @property
    def h(self) -> float:
        return 2 * np.pi / self.n


def _as_values(gv) -> np.ndarray:
    return gv.values if isinstance(gv, GaugeVector) else np.asarray(gv, dtype=float)


def sample_gauge(shape, n: int) -> GaugeVector:
    if isinstance(shape, dict):
        shape = shape_from_dict(shape)
    if isinstance(shape, Shape):
        return GaugeVector(shape.gauge(grid(n)))
    return GaugeVector(np.asarray(shape, dtype=float))


def convexity_constraints_gauge(n: int, mode: str = "rigorous") -> LinearConstraintSet:
    """Rows gamma_{i-1} + gamma_{i+1} - 2 gamma_i cos h >= 0 (or the fd variant)."""
    if mode not in ("rigorous", "fd"):
        raise ValueError(f"unknown gauge convexity mode {mode!r}")
    return convexity_constraints(n, mode)


def vertices_gauge(gv, check: bool = True) -> ConvexPolygon:
    g = _as_values(gv)
    if g.size < 5:
        raise ValueError("need at least 5 grid angles")
    if np.any(g <= 0):
        raise ValueError("gauge values must be positive")
    if check:
        slack = convexity_constraints_gauge(g.size).slack(g)
        bad = np.flatnonzero(slack < -feas_tol(g) * (2 - 2 * np.cos(2 * np.pi / g.size)))
        if bad.size:
            raise InfeasibleParameters(
                f"gauge convexity violated at indices {bad.tolist()[:20]}", bad)
    th = grid(g.size)
    xy = np.stack([np.cos(th), np.sin(th)], axis=1) / g[:, None]
    return ConvexPolygon(xy, th, "radial")


def gauge_triangle_area_identity(g1: float, g2: float, g3: float, h: float) -> float:
    """Closed-form oriented area of the triangle r(t-h)/g1, r(t)/g2, r(t+h)/g3."""
    if min(g1, g2, g3) <= 0:
        raise ValueError("gauge values must be positive")
    return (g1 + g3 - 2 * g2 * np.cos(h)) * np.sin(h) / (2 * g1 * g2 * g3)


def polar_pair(params, check: bool = True) -> tuple[ConvexPolygon, ConvexPolygon]:
    """Support polygon and gauge polygon built from one positive parameter vector."""
    x = np.asarray(params, dtype=float)
    if np.any(x <= 0):
        raise ValueError("polar pair parameters must be positive")
    return vertices(SupportVector(x), check), vertices_gauge(GaugeVector(x), check)


def gradient_transform_gauge(density: BoundaryDensity, polygon: ConvexPolygon, gv) -> np.ndarray:
    """dJ/dgamma_i = -(1/gamma_i^2) int f psi_i (n . r_i) dsigma.

    The hat psi_i is affine along each edge, so the integral is assembled
    from the per-vertex loads and projected on the vertex ray r_i.
    """
    g = _as_values(gv)
    if polygon.n != g.size or polygon.kind != "radial":
        raise ValueError("density/polygon do not match the gauge vector")
    loads = vertex_loads(polygon, density)
    th = grid(g.size)
    radial = loads[:, 0] * np.cos(th) + loads[:, 1] * np.sin(th)
    return -radial / g ** 2
