"""Piecewise-linear finite elements on convex polygons.

Meshes are a centroid fan refined uniformly (every triangle split in four),
so each boundary mesh edge stays attached to the polygon edge it came from.
That provenance is what lets boundary densities be mapped back to the
parameter vector.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import BoundaryDensity, ConvexPolygon, GeometryError, polygon_area, polygon_centroid


class FEMError(RuntimeError):
    pass


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray          # (N, 2)
    tris: np.ndarray           # (T, 3), CCW
    bedges: np.ndarray         # (B, 2) boundary node pairs, CCW along the boundary
    btag: np.ndarray           # (B,) originating polygon edge
    bs: np.ndarray             # (B, 2) arclength fractions of the endpoints on that edge
    n_poly_edges: int
    level: int
    node_map: sp.csr_matrix | None = None   # nodes = node_map @ [centroid; polygon vertices]

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.bedges)

    @property
    def interior_mask(self) -> np.ndarray:
        m = np.ones(len(self.nodes), dtype=bool)
        m[self.bedges.ravel()] = False
        return m

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.nodes[self.tris[:, k]] for k in range(3))
        return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                      - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))

    def max_edge(self) -> float:
        p = self.nodes[self.tris]
        e = p - np.roll(p, -1, axis=1)
        return float(np.sqrt((e ** 2).sum(-1)).max())


@dataclass(frozen=True)
class DiscreteField:
    """Nodal values of a P1 function; ``load`` is the full right-hand side it solved."""

    values: np.ndarray
    dirichlet: np.ndarray
    load: np.ndarray | None = None


def _fan(P: ConvexPolygon, degenerate_tol: float):
    lengths = P.edge_lengths()
    diam = P.diameter()
    keep = np.flatnonzero(lengths > degenerate_tol * max(diam, 1e-300))
    if keep.size < 3 or polygon_area(P) < 1e-10 * diam ** 2:
        raise GeometryError("degenerate polygon cannot be meshed")
    c = polygon_centroid(P)
    m, n = keep.size, P.n
    # a skipped edge j has V_j ~ V_{j+1}: V_j joins the group of the next kept vertex
    owner = np.empty(n, dtype=int)
    kept = np.zeros(n, dtype=bool)
    kept[keep] = True
    slot = np.full(n, -1)
    slot[keep] = np.arange(m)
    for j in range(n):
        i = j
        while not kept[i]:
            i = (i + 1) % n
        owner[j] = slot[i]
    counts = np.bincount(owner, minlength=m)
    rows = np.concatenate([[0], 1 + owner])
    cols = np.concatenate([[0], 1 + np.arange(n)])
    vals = np.concatenate([[1.0], 1.0 / counts[owner]])
    T = sp.csr_matrix((vals, (rows, cols)), shape=(m + 1, n + 1))
    nodes = T @ np.vstack([c, P.vertices])
    k = np.arange(m)
    tris = np.stack([np.zeros(m, dtype=int), 1 + k, 1 + (k + 1) % m], axis=1)
    bedges = np.stack([1 + k, 1 + (k + 1) % m], axis=1)
    bs = np.tile([0.0, 1.0], (m, 1))
    return nodes, tris, bedges, keep.copy(), bs, T


def _refine(nodes, tris, bedges, btag, bs, nmap):
    n = len(nodes)
    e = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    key = np.minimum(e[:, 0], e[:, 1]) * n + np.maximum(e[:, 0], e[:, 1])
    ukey, inv = np.unique(key, return_inverse=True)
    a, b = ukey // n, ukey % n
    mids = 0.5 * (nodes[a] + nodes[b])
    nmap = sp.vstack([nmap, 0.5 * (nmap[a] + nmap[b])]).tocsr()
    T = len(tris)
    m01, m12, m20 = (n + inv[k * T:(k + 1) * T] for k in range(3))
    t0, t1, t2 = tris[:, 0], tris[:, 1], tris[:, 2]
    new_tris = np.concatenate([
        np.stack([t0, m01, m20], 1), np.stack([m01, t1, m12], 1),
        np.stack([m20, m12, t2], 1), np.stack([m01, m12, m20], 1)])
    bkey = np.minimum(bedges[:, 0], bedges[:, 1]) * n + np.maximum(bedges[:, 0], bedges[:, 1])
    bm = n + np.searchsorted(ukey, bkey)
    new_b = np.concatenate([np.stack([bedges[:, 0], bm], 1), np.stack([bm, bedges[:, 1]], 1)])
    smid = bs.mean(axis=1)
    new_bs = np.concatenate([np.stack([bs[:, 0], smid], 1), np.stack([smid, bs[:, 1]], 1)])
    # keep boundary edges of one polygon edge contiguous
    order = np.arange(2 * len(bedges)).reshape(2, -1).T.ravel()
    return (np.vstack([nodes, mids]), new_tris, new_b[order],
            np.repeat(btag, 2), new_bs[order], nmap)


def refinement_level(P: ConvexPolygon, target_h: float) -> int:
    """Number of uniform refinements needed for max edge <= target_h."""
    nodes, tris, *_ = _fan(P, 1e-9)
    p = nodes[tris]
    longest = float(np.sqrt(((p - np.roll(p, -1, axis=1)) ** 2).sum(-1)).max())
    return max(0, int(np.ceil(np.log2(longest / target_h) - 1e-12)))


def mesh_polygon(P: ConvexPolygon, target_h: float | None = None, level: int | None = None,
                 degenerate_tol: float = 1e-9) -> Mesh:
    """Centroid fan of P refined until the longest edge is at most target_h.

    Polygon edges shorter than degenerate_tol * diam are skipped; their
    neighbouring vertices coincide up to that tolerance.
    """
    if level is None:
        if target_h is None:
            target_h = P.diameter() / 40
        level = refinement_level(P, target_h)
    parts = _fan(P, degenerate_tol)
    for _ in range(level):
        parts = _refine(*parts)
    nodes, tris, bedges, btag, bs, T = parts
    return Mesh(nodes, tris, bedges, btag, bs, P.n, level, T)


def mesh_to_text(mesh: Mesh) -> str:
    lines = [f"nodes {len(mesh.nodes)}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.nodes]
    lines.append(f"triangles {len(mesh.tris)}")
    lines += [" ".join(map(str, t)) for t in mesh.tris]
    return "\n".join(lines) + "\n"


# -- assembly ---------------------------------------------------------------

def _grads(mesh: Mesh):
    """Triangle areas and barycentric gradients, shapes (T,) and (T, 3, 2)."""
    x = mesh.nodes[mesh.tris]
    area = mesh.triangle_areas()
    if np.any(area <= 0):
        raise FEMError("mesh has non-positive triangle areas")
    b = np.stack([x[:, 1, 1] - x[:, 2, 1], x[:, 2, 1] - x[:, 0, 1], x[:, 0, 1] - x[:, 1, 1]], 1)
    c = np.stack([x[:, 2, 0] - x[:, 1, 0], x[:, 0, 0] - x[:, 2, 0], x[:, 1, 0] - x[:, 0, 0]], 1)
    return area, np.stack([b, c], axis=2) / (2 * area)[:, None, None]


def assemble(mesh: Mesh):
    """Global P1 stiffness and mass matrices (CSR)."""
    area, grad = _grads(mesh)
    ke = area[:, None, None] * np.einsum("tik,tjk->tij", grad, grad)
    me = area[:, None, None] * (np.ones((3, 3)) + np.eye(3))[None] / 12
    rows = np.repeat(mesh.tris, 3, axis=1).ravel()
    cols = np.tile(mesh.tris, (1, 3)).ravel()
    N = len(mesh.nodes)
    K = sp.csr_matrix((ke.ravel(), (rows, cols)), shape=(N, N))
    M = sp.csr_matrix((me.ravel(), (rows, cols)), shape=(N, N))
    return K, M


_BARY3 = np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]])


def load_vector(mesh: Mesh, source) -> np.ndarray:
    """int f phi_i with the 3-point barycentric rule; source is a callable, scalar or nodal array."""
    N = len(mesh.nodes)
    area = mesh.triangle_areas()
    if callable(source):
        x = mesh.nodes[mesh.tris]                      # (T, 3, 2)
        pts = np.einsum("qk,tkd->tqd", _BARY3, x)       # (T, 3, 2)
        fq = np.asarray(source(pts.reshape(-1, 2)), dtype=float).reshape(-1, 3)
    else:
        s = np.asarray(source, dtype=float)
        if s.ndim == 0:
            fq = np.full((len(mesh.tris), 3), float(s))
        else:
            fq = s[mesh.tris] @ _BARY3.T
    contrib = (area / 3)[:, None] * (fq @ _BARY3)    # (T, 3) per vertex
    return np.bincount(mesh.tris.ravel(), contrib.ravel(), minlength=N)


def solve_poisson(mesh: Mesh, source, matrices=None) -> DiscreteField:
    """-Laplace u = f in K, u = 0 on the boundary."""
    K, M = matrices or assemble(mesh)
    F = load_vector(mesh, source)
    inner = mesh.interior_mask
    u = np.zeros(len(mesh.nodes))
    Kii = K[inner][:, inner].tocsc()
    if Kii.shape[0]:
        u[inner] = spla.spsolve(Kii, F[inner])
        res = np.linalg.norm(Kii @ u[inner] - F[inner])
        # backward error: residual against |K| |u| + |F|
        scale = max(spla.norm(Kii, np.inf) * np.linalg.norm(u[inner]) + np.linalg.norm(F[inner]), 1e-300)
        if not np.isfinite(res) or res > 1e-10 * scale and res > 1e-14:
            raise FEMError(f"Poisson solve residual {res:.3e} too large")
    return DiscreteField(u, ~inner, F)


def eigs(mesh: Mesh, k: int, matrices=None):
    """First k Dirichlet eigenpairs (ascending), eigenfunctions mass-normalized."""
    if k < 1:
        raise ValueError("k must be >= 1")
    K, M = matrices or assemble(mesh)
    inner = mesh.interior_mask
    Kii = K[inner][:, inner].tocsc()
    Mii = M[inner][:, inner].tocsc()
    m = Kii.shape[0]
    if m <= k + 1:
        raise FEMError("mesh too coarse for the requested eigenvalues")
    v0 = np.ones(m)
    try:
        vals, vecs = spla.eigsh(Kii, k=k, M=Mii, sigma=0.0, which="LM", v0=v0,
                                maxiter=5000, tol=1e-12)
    except spla.ArpackNoConvergence as exc:
        raise FEMError("eigensolver did not converge") from exc
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    out = []
    for j in range(k):
        u = np.zeros(len(mesh.nodes))
        v = vecs[:, j]
        v = v / np.sqrt(v @ (Mii @ v))
        # deterministic sign: largest-magnitude entry positive
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        u[inner] = v
        out.append((float(vals[j]), DiscreteField(u, ~inner, vals[j] * (M @ u))))
    return out


# -- boundary densities ------------------------------------------------------

_G3X = np.array([0.5 - np.sqrt(15) / 10, 0.5, 0.5 + np.sqrt(15) / 10])
_G3W = np.array([5 / 18, 8 / 18, 5 / 18])


def _boundary_geometry(mesh: Mesh):
    a = mesh.nodes[mesh.bedges[:, 0]]
    b = mesh.nodes[mesh.bedges[:, 1]]
    d = b - a
    length = np.hypot(*d.T)
    normal = np.stack([d[:, 1], -d[:, 0]], 1) / length[:, None]
    return length, normal


def _element_boundary_gradient(mesh: Mesh, field: DiscreteField) -> np.ndarray:
    """Gradient of the triangle adjacent to each boundary edge, shape (B, 2)."""
    N = len(mesh.nodes)
    e = np.concatenate([mesh.tris[:, [0, 1]], mesh.tris[:, [1, 2]], mesh.tris[:, [2, 0]]])
    owner = np.tile(np.arange(len(mesh.tris)), 3)
    key = e[:, 0] * N + e[:, 1]  # CCW orientation matches boundary orientation
    order = np.argsort(key)
    bkey = mesh.bedges[:, 0] * N + mesh.bedges[:, 1]
    pos = np.searchsorted(key[order], bkey)
    if np.any(key[order][np.minimum(pos, len(key) - 1)] != bkey):
        raise FEMError("boundary edge without adjacent triangle")
    tri = owner[order][pos]
    _, grad = _grads(mesh)
    return np.einsum("tk,tkd->td", field.values[mesh.tris[tri]], grad[tri])


def _element_normal_derivative(mesh: Mesh, field: DiscreteField) -> np.ndarray:
    """d_n u per boundary edge from the gradient of the adjacent triangle."""
    _, normal = _boundary_geometry(mesh)
    return (_element_boundary_gradient(mesh, field) * normal).sum(1)


def _recovered_normal_derivative(mesh: Mesh, field: DiscreteField, K) -> np.ndarray:
    """Nodal d_n u on the boundary from the weak residual K u - F.

    Green's formula gives int d_n u phi_j = (K u - F)_j for boundary nodes j;
    solving with the boundary mass matrix returns a P1 trace of the flux.
    Returns per-edge endpoint values, shape (B, 2).
    """
    if field.load is None:
        raise FEMError("flux recovery needs the field's load vector")
    r = K @ field.values - field.load
    bnodes = mesh.boundary_nodes
    local = np.full(len(mesh.nodes), -1)
    local[bnodes] = np.arange(bnodes.size)
    length, _ = _boundary_geometry(mesh)
    i, j = local[mesh.bedges[:, 0]], local[mesh.bedges[:, 1]]
    rows = np.concatenate([i, j, i, j])
    cols = np.concatenate([i, j, j, i])
    vals = np.concatenate([length / 3, length / 3, length / 6, length / 6])
    Mb = sp.csc_matrix((vals, (rows, cols)), shape=(bnodes.size,) * 2)
    g = spla.spsolve(Mb, r[bnodes])
    return np.stack([g[i], g[j]], axis=1)


def boundary_gradient_density(mesh: Mesh, u: DiscreteField, q: DiscreteField | None = None,
                              method: str = "element", matrices=None) -> BoundaryDensity:
    """Boundary density f = |grad u|^2, or f = -d_n u d_n q when q is given.

    ``method="element"`` uses the constant gradient of the triangle adjacent
    to each boundary edge; ``method="recovered"`` uses the variationally
    recovered normal flux (piecewise linear along the boundary).
    """
    if len(u.values) != len(mesh.nodes) or (q is not None and len(q.values) != len(mesh.nodes)):
        raise FEMError("field does not live on this mesh")
    length, _ = _boundary_geometry(mesh)
    xi = _G3X
    if method == "element":
        if q is None:
            # full |grad u|^2; equals (d_n u)^2 for fields vanishing on the boundary
            value = (_element_boundary_gradient(mesh, u) ** 2).sum(1)[:, None] * np.ones(3)
        du = _element_normal_derivative(mesh, u)[:, None] * np.ones(3)
        dq = None if q is None else _element_normal_derivative(mesh, q)[:, None] * np.ones(3)
    elif method == "recovered":
        K = (matrices or assemble(mesh))[0]
        ends = _recovered_normal_derivative(mesh, u, K)
        du = ends[:, :1] * (1 - xi) + ends[:, 1:] * xi
        dq = None
        if q is not None:
            endq = _recovered_normal_derivative(mesh, q, K)
            dq = endq[:, :1] * (1 - xi) + endq[:, 1:] * xi
    else:
        raise ValueError(f"unknown density method {method!r}")
    if q is not None:
        value = -du * dq
    elif method != "element":
        value = du ** 2
    s = mesh.bs[:, :1] + (mesh.bs[:, 1:] - mesh.bs[:, :1]) * xi
    weight = length[:, None] * _G3W
    edge = np.repeat(mesh.btag, 3)
    return BoundaryDensity(edge, s.ravel(), weight.ravel(), value.ravel(), mesh.n_poly_edges)


# -- exact gradients of the discrete functionals --------------------------------
#
# With the mesh topology fixed, node positions are linear in the fan centre and
# the polygon vertices, so the discrete eigenvalue / integral is a smooth
# function of the vertices.  Each node velocity induces a P1 velocity field V,
# and the derivative of the P1 forms is the volume expression
#   d int grad a . grad b = int grad a . (div V - DV - DV^T) grad b,
#   d int a b = int a b div V.

def _scatter(mesh: Mesh, local: np.ndarray) -> np.ndarray:
    """Sum per-(triangle, local node, direction) values into (N, 2)."""
    N = len(mesh.nodes)
    idx = mesh.tris.ravel()
    return np.stack([np.bincount(idx, local[:, :, d].ravel(), minlength=N) for d in range(2)], 1)


def eigen_node_gradient(mesh: Mesh, lam: float, u: DiscreteField) -> np.ndarray:
    """d lambda / d node positions for a simple, mass-normalized eigenpair."""
    area, grad = _grads(mesh)
    ut = u.values[mesh.tris]
    gu = np.einsum("tk,tkd->td", ut, grad)
    g2 = (gu ** 2).sum(1)
    gphi_gu = np.einsum("tad,td->ta", grad, gu)
    mass = area / 12 * ((ut ** 2).sum(1) + ut.sum(1) ** 2)
    local = (area[:, None, None] * (g2[:, None, None] * grad - 2 * gu[:, None, :] * gphi_gu[:, :, None])
             - lam * mass[:, None, None] * grad)
    return _scatter(mesh, local)


def _source_gradient(source, pts, eps=1e-6):
    if not callable(source):
        return np.zeros_like(pts)
    out = np.empty_like(pts)
    for d in range(2):
        e = np.zeros(2)
        e[d] = eps
        out[:, d] = (np.asarray(source(pts + e)) - np.asarray(source(pts - e))) / (2 * eps)
    return out


def integral_node_gradient(mesh: Mesh, u: DiscreteField, source) -> np.ndarray:
    """d/dX of J = int u_h, where K u = F(source) with zero boundary values."""
    K, M = assemble(mesh)
    z = solve_poisson(mesh, 1.0, matrices=(K, M)).values      # adjoint: K z = M 1
    area, grad = _grads(mesh)
    ut, zt = u.values[mesh.tris], z[mesh.tris]
    gu = np.einsum("tk,tkd->td", ut, grad)
    gz = np.einsum("tk,tkd->td", zt, grad)
    gphi_gu = np.einsum("tad,td->ta", grad, gu)
    gphi_gz = np.einsum("tad,td->ta", grad, gz)
    # int u div V
    local = (area * ut.mean(1))[:, None, None] * grad
    # - z^T dK u
    local -= area[:, None, None] * ((gu * gz).sum(1)[:, None, None] * grad
                                    - gz[:, None, :] * gphi_gu[:, :, None]
                                    - gu[:, None, :] * gphi_gz[:, :, None])
    # + z^T dF
    x = mesh.nodes[mesh.tris]
    pts = np.einsum("qk,tkd->tqd", _BARY3, x)
    zq = zt @ _BARY3.T
    if callable(source):
        fq = np.asarray(source(pts.reshape(-1, 2)), dtype=float).reshape(-1, 3)
    else:
        fq = np.full(zq.shape, float(source))
    dfq = _source_gradient(source, pts.reshape(-1, 2)).reshape(-1, 3, 2)
    local += (area / 3 * (fq * zq).sum(1))[:, None, None] * grad
    local += (area / 3)[:, None, None] * np.einsum("tqd,qa,tq->tad", dfq, _BARY3, zq)
    return _scatter(mesh, local)


def centroid_jacobian(V: np.ndarray) -> np.ndarray:
    """dC/dV of the area centroid, shape (2, n, 2)."""
    x, y = V[:, 0], V[:, 1]
    xp, yp = np.roll(x, -1), np.roll(y, -1)
    xm, ym = np.roll(x, 1), np.roll(y, 1)
    cr = x * yp - xp * y
    crm = np.roll(cr, 1)
    A = 0.5 * cr.sum()
    C = np.array([((x + xp) * cr).sum(), ((y + yp) * cr).sum()]) / (6 * A)
    dA = 0.5 * np.stack([yp - ym, xm - xp], 1)
    dSx = np.stack([cr + (x + xp) * yp + crm - (xm + x) * ym, -(x + xp) * xp + (xm + x) * xm], 1)
    dSy = np.stack([(y + yp) * yp - (ym + y) * ym, cr - (y + yp) * xp + crm + (ym + y) * xm], 1)
    J = np.stack([dSx, dSy]) / (6 * A)
    return J - C[:, None, None] * dA[None] / A


def node_to_vertex_gradient(mesh: Mesh, P: ConvexPolygon, node_grad: np.ndarray) -> np.ndarray:
    """Chain a node-position gradient (N, 2) back to the polygon vertices (n, 2)."""
    if mesh.node_map is None:
        raise FEMError("mesh carries no node map")
    g = mesh.node_map.T @ node_grad                 # (n + 1, 2): centre, vertices
    return g[1:] + np.einsum("k,kvd->vd", g[0], centroid_jacobian(P.vertices))


def extrapolate(v_coarse: float, v_fine: float) -> float:
    """Richardson extrapolation for O(h^2) convergence under h -> h/2."""
    return (4 * v_fine - v_coarse) / 3
