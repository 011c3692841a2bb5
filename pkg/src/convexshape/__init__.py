"""Shape optimization over discrete convex bodies.

Support-function and gauge-function parametrizations whose linear
constraints guarantee convex polygons, exact and adjoint gradients, a small
P1 finite-element engine, and an interior-point optimizer.
"""
from .geometry import ConvexPolygon, GeometryError, polygon_area, polygon_perimeter
from .support import LinearConstraintSet, SupportVector, sample_support, vertices
from .gauge import GaugeVector, sample_gauge, vertices_gauge

__version__ = "0.1.0"

__all__ = [
    "ConvexPolygon", "GeometryError", "polygon_area", "polygon_perimeter",
    "LinearConstraintSet", "SupportVector", "sample_support", "vertices",
    "GaugeVector", "sample_gauge", "vertices_gauge", "__version__",
]
