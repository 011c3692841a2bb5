"""Polygon computations shared by the support and gauge parametrizations.

Polygons are stored as CCW vertex arrays together with the grid angle that
generated each vertex.  For support polygons the angle is the normal angle
of the supporting line through the vertex; for gauge polygons it is the
radial angle of the vertex.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Raised on invalid geometric input (non-convex polygon, origin outside, ...)."""


@dataclass(frozen=True)
class ConvexPolygon:
    vertices: np.ndarray
    angles: np.ndarray
    kind: str = "normal"  # "normal" (support grid) or "radial" (gauge grid)

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        a = np.asarray(self.angles, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2:
            raise GeometryError("vertices must have shape (n, 2)")
        if a.shape != (v.shape[0],):
            raise GeometryError("one angle per vertex is required")
        v.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "angles", a)

    @property
    def n(self) -> int:
        return self.vertices.shape[0]

    def edges(self) -> np.ndarray:
        """Edge vectors A_{i+1} - A_i, shape (n, 2)."""
        return np.roll(self.vertices, -1, axis=0) - self.vertices

    def edge_lengths(self) -> np.ndarray:
        return np.hypot(*self.edges().T)

    def edge_normals(self) -> np.ndarray:
        """Outward unit normals of the edges; zero rows for degenerate edges."""
        e = self.edges()
        length = np.hypot(*e.T)
        out = np.zeros_like(e)
        ok = length > 0
        out[ok, 0] = e[ok, 1] / length[ok]
        out[ok, 1] = -e[ok, 0] / length[ok]
        return out

    def edge_normal_angles(self) -> np.ndarray:
        """Normal angle attached to each edge.

        For support polygons this is the midpoint grid angle theta_{i+1/2};
        it stays well defined on zero-length edges.
        """
        if self.kind == "normal":
            h = 2 * np.pi / self.n
            return np.mod(self.angles + h / 2, 2 * np.pi)
        nrm = self.edge_normals()
        return np.mod(np.arctan2(nrm[:, 1], nrm[:, 0]), 2 * np.pi)

    def diameter(self) -> float:
        v = self.vertices
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def support(self, theta) -> np.ndarray:
        """Support function max_x x.u(theta) evaluated at the given angles."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        u = np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return (u @ self.vertices.T).max(axis=1)


def polygon(vertices, angles=None, kind: str = "normal") -> ConvexPolygon:
    """Build a polygon from raw vertices; angles default to vertex polar angles."""
    v = np.asarray(vertices, dtype=float)
    if angles is None:
        angles = np.mod(np.arctan2(v[:, 1], v[:, 0]), 2 * np.pi)
        kind = "radial"
    return ConvexPolygon(v, angles, kind)


def cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def oriented_triangle_area(a1, a2, a3) -> float:
    """Signed area ((A2 - A1) x (A3 - A2)) / 2; positive for CCW triples."""
    a1, a2, a3 = (np.asarray(a, dtype=float) for a in (a1, a2, a3))
    return 0.5 * cross2(a2 - a1, a3 - a2)


def polygon_area(P: ConvexPolygon) -> float:
    v = P.vertices
    return 0.5 * float(cross2(v, np.roll(v, -1, axis=0)).sum())


def polygon_perimeter(P: ConvexPolygon) -> float:
    return float(P.edge_lengths().sum())


def polygon_centroid(P: ConvexPolygon) -> np.ndarray:
    v = P.vertices
    w = np.roll(v, -1, axis=0)
    c = cross2(v, w)
    a = c.sum() / 2
    if abs(a) < 1e-300:
        return v.mean(axis=0)
    return ((v + w) * c[:, None]).sum(axis=0) / (6 * a)


def triple_areas(P: ConvexPolygon) -> np.ndarray:
    """Oriented areas of all consecutive triples (A_{i-1}, A_i, A_{i+1})."""
    v = P.vertices
    return oriented_triangle_area(np.roll(v, 1, axis=0), v, np.roll(v, -1, axis=0))


def is_convex(P: ConvexPolygon, tol: float | None = None):
    """Return (convex, violating vertex indices).

    A vertex violates convexity when the oriented area of the triple centred
    on it falls below -tol.  The default tolerance scales with the squared
    size of the polygon.
    """
    if tol is None:
        scale = max(1.0, float(np.abs(P.vertices).max()) ** 2)
        tol = 1e-12 * scale
    areas = triple_areas(P)
    bad = np.flatnonzero(areas < -tol)
    if polygon_area(P) < -tol:
        bad = np.arange(P.n)
    return bad.size == 0, bad.tolist()


def _require_convex(P: ConvexPolygon, name: str):
    ok, bad = is_convex(P, tol=1e-9 * max(1.0, P.diameter() ** 2))
    if not ok:
        raise GeometryError(f"{name} is not convex (vertices {bad[:10]})")


def point_polygon_distance(points, P: ConvexPolygon) -> np.ndarray:
    """Distance from points to the convex polygon P (zero inside)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    a = P.vertices
    e = P.edges()
    ee = (e ** 2).sum(axis=1)
    ok = ee > 0
    a, e, ee = a[ok], e[ok], ee[ok]
    if a.shape[0] == 0:
        return np.hypot(*(pts - P.vertices[0]).T)
    d = pts[:, None, :] - a[None, :, :]
    t = np.clip((d * e[None]).sum(-1) / ee[None], 0.0, 1.0)
    proj = a[None] + t[..., None] * e[None]
    dist = np.hypot(*(pts[:, None, :] - proj).transpose(2, 0, 1)).min(axis=1)
    inside = np.all(cross2(e[None], d) >= 0, axis=1)
    dist[inside] = 0.0
    return dist


def hausdorff_distance(P: ConvexPolygon, Q: ConvexPolygon) -> float:
    """Hausdorff distance between two convex polygons.

    For convex sets the point-to-set distance is convex, so the suprema are
    attained at vertices.
    """
    _require_convex(P, "first polygon")
    _require_convex(Q, "second polygon")
    return float(max(point_polygon_distance(P.vertices, Q).max(),
                     point_polygon_distance(Q.vertices, P).max()))


def support_hausdorff(support_a, support_b, samples: int = 20000) -> float:
    """Hausdorff distance of two convex bodies given by support-function callables.

    Uses d_H(K, L) = sup_u |h_K(u) - h_L(u)| on a dense angle grid.
    """
    theta = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    return float(np.abs(support_a(theta) - support_b(theta)).max())


def congruent_hausdorff(support_a, support_b, samples: int = 4096, rotations: int = 72) -> float:
    """Hausdorff distance minimized over rigid motions of the second body.

    Both bodies are given as support callables.  Rotating by phi and
    translating by t maps h(u) to h(u - phi) + t.u; the minimum is found by
    a coarse rotation scan followed by Nelder-Mead on (phi, t).
    """
    from scipy.optimize import minimize

    theta = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    u = np.stack([np.cos(theta), np.sin(theta)], axis=1)
    ha = support_a(theta)

    def dist(z):
        return float(np.abs(ha - support_b(theta - z[0]) - u @ z[1:]).max())

    def steiner(h):
        return 2 * (u * h[:, None]).mean(axis=0)

    best = None
    for phi in np.linspace(0, 2 * np.pi, rotations, endpoint=False):
        z = np.concatenate([[phi], steiner(ha) - steiner(support_b(theta - phi))])
        d = dist(z)
        if best is None or d < best[0]:
            best = (d, z)
    res = minimize(dist, best[1], method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
    return min(best[0], float(res.fun))


def polar_polygon(P: ConvexPolygon) -> ConvexPolygon:
    """Exact polar of a polygon strictly containing the origin.

    Each non-degenerate edge with line n.x = c maps to the polar vertex n / c.
    """
    nrm = P.edge_normals()
    keep = np.hypot(*nrm.T) > 0
    c = (nrm * P.vertices).sum(axis=1)
    if np.any(c[keep] <= 1e-14 * max(1.0, P.diameter())):
        raise GeometryError("origin is not strictly inside the polygon")
    ang = np.mod(np.arctan2(nrm[keep, 1], nrm[keep, 0]), 2 * np.pi)
    verts = nrm[keep] / c[keep, None]
    # collinear consecutive edges produce duplicate polar vertices
    dup = np.hypot(*(verts - np.roll(verts, 1, axis=0)).T) < 1e-13 * np.abs(verts).max()
    if dup.all():
        dup[0] = False
    return ConvexPolygon(verts[~dup], ang[~dup], "radial")


# -- hat functions ---------------------------------------------------------

@dataclass(frozen=True)
class HatBasis:
    """Periodic P1 hat functions on the uniform grid theta_j = j h."""

    n: int
    h: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "h", 2 * np.pi / self.n)

    def __call__(self, i: int, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        d = np.mod(theta - i * self.h + np.pi, 2 * np.pi) - np.pi
        return np.clip(1.0 - np.abs(d) / self.h, 0.0, None)

    def matrix(self, theta) -> np.ndarray:
        """All hats at the given angles, shape (len(theta), n)."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        return np.stack([self(i, theta) for i in range(self.n)], axis=1)


# -- boundary densities ----------------------------------------------------

_GAUSS3 = (np.array([0.5 - np.sqrt(15) / 10, 0.5, 0.5 + np.sqrt(15) / 10]),
           np.array([5 / 18, 8 / 18, 5 / 18]))


@dataclass(frozen=True)
class BoundaryDensity:
    """Samples of a boundary function f on the edges of a polygon.

    ``edge[k]`` is the polygon edge (A_e, A_{e+1}) holding quadrature point k,
    ``s[k]`` its arclength fraction along that edge, ``weight[k]`` its
    quadrature weight and ``value[k]`` the sampled f.
    """

    edge: np.ndarray
    s: np.ndarray
    weight: np.ndarray
    value: np.ndarray
    n_edges: int

    def check(self, P: ConvexPolygon):
        if self.n_edges != P.n:
            raise GeometryError(
                f"density built for {self.n_edges} edges, polygon has {P.n}")

    def points(self, P: ConvexPolygon) -> np.ndarray:
        a = P.vertices[self.edge]
        b = P.vertices[(self.edge + 1) % P.n]
        return a + self.s[:, None] * (b - a)


def density_from_function(P: ConvexPolygon, f, segments: int = 1) -> BoundaryDensity:
    """Sample a callable f(points) with 3-point Gauss on every edge.

    ``segments`` splits each edge into equal pieces before applying the rule.
    """
    xg, wg = _GAUSS3
    sub = (np.arange(segments)[:, None] + xg[None, :]).ravel() / segments
    wsub = np.tile(wg, segments) / segments
    lengths = P.edge_lengths()
    edge = np.repeat(np.arange(P.n), sub.size)
    s = np.tile(sub, P.n)
    weight = np.repeat(lengths, sub.size) * np.tile(wsub, P.n)
    dens = BoundaryDensity(edge, s, weight, np.zeros_like(s), P.n)
    if callable(f):
        value = np.asarray(f(dens.points(P)), dtype=float)
        value = np.broadcast_to(value, s.shape).astype(float)
    else:
        value = np.full_like(s, float(f))
    return BoundaryDensity(edge, s, weight, value, P.n)


def boundary_integral(P: ConvexPolygon, density: BoundaryDensity, i=None):
    """Integrals of f times the transported hat psi_i over the boundary.

    The hat weight of edge (A_e, A_{e+1}) is split between psi_e and
    psi_{e+1} linearly in arclength.  Returns the full vector of n integrals,
    or the i-th entry when ``i`` is given.
    """
    density.check(P)
    wf = density.weight * density.value
    out = np.bincount(density.edge, wf * (1 - density.s), minlength=P.n)
    out += np.bincount((density.edge + 1) % P.n, wf * density.s, minlength=P.n)
    return out if i is None else float(out[i])


def vertex_loads(P: ConvexPolygon, density: BoundaryDensity) -> np.ndarray:
    """Per-vertex vectors C_v = int f phi_v n dsigma, shape (n, 2).

    phi_v is the arclength-linear hat of vertex v and n the edge normal.  The
    first variation of J under a vertex motion dA is sum_v C_v . dA_v.
    """
    density.check(P)
    nrm = P.edge_normals()[density.edge]
    wf = (density.weight * density.value)[:, None] * nrm
    out = np.zeros((P.n, 2))
    np.add.at(out, density.edge, wf * (1 - density.s)[:, None])
    np.add.at(out, (density.edge + 1) % P.n, wf * density.s[:, None])
    return out
