"""Discrete support functions and the linear constraint families they induce.

A convex body is represented by the samples p_i of its support function on
the uniform grid theta_i = 2 pi i / n.  The polygon vertices are

    A_i = p_i r_i + q_i t_i,   q_i = (p_{i+1} - p_{i-1}) / (2 sin h),

and the polygon is convex whenever every discrete curvature radius

    rho_i = (p_{i+1} + p_{i-1} - 2 p_i cos h) / (2 - 2 cos h)

is non-negative.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import ConvexPolygon
from .shapes import Shape, shape_from_dict


class InfeasibleParameters(ValueError):
    """Parameter vector violates the discrete convexity rows."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = list(indices)


def grid(n: int) -> np.ndarray:
    return 2 * np.pi * np.arange(n) / n


def feas_tol(values) -> float:
    return 1e-9 * max(1.0, float(np.abs(values).max()))


@dataclass(frozen=True)
class SupportVector:
    values: np.ndarray
    n: int = field(init=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if v.size < 5:
            raise ValueError(f"need at least 5 grid angles, got {v.size}")
        if not np.all(np.isfinite(v)):
            raise ValueError("support values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "n", v.size)

    @property
    def h(self) -> float:
        return 2 * np.pi / self.n

    @property
    def theta(self) -> np.ndarray:
        return grid(self.n)


def _as_values(sv) -> np.ndarray:
    return sv.values if isinstance(sv, SupportVector) else np.asarray(sv, dtype=float)


def sample_support(shape, n: int) -> SupportVector:
    """Sample h_K(theta_j) for a shape descriptor or a raw list of values."""
    if n < 5:
        raise ValueError(f"need at least 5 grid angles, got {n}")
    if isinstance(shape, dict):
        shape = shape_from_dict(shape)
    if isinstance(shape, Shape):
        return SupportVector(shape.support(grid(n)))
    values = np.asarray(shape, dtype=float)
    if values.shape != (n,):
        raise ValueError(f"expected {n} support values, got shape {values.shape}")
    return SupportVector(values)


def curvature_radii(sv) -> np.ndarray:
    p = _as_values(sv)
    h = 2 * np.pi / p.size
    return (np.roll(p, -1) + np.roll(p, 1) - 2 * p * np.cos(h)) / (2 - 2 * np.cos(h))


def tangential_coeffs(sv) -> np.ndarray:
    p = _as_values(sv)
    h = 2 * np.pi / p.size
    return (np.roll(p, -1) - np.roll(p, 1)) / (2 * np.sin(h))


def vertices(sv, check: bool = True) -> ConvexPolygon:
    """Discrete polygon A_i = p_i r_i + q_i t_i, annotated with theta_i."""
    p = _as_values(sv)
    if p.size < 5:
        raise ValueError("need at least 5 grid angles")
    if check:
        rho = curvature_radii(p)
        bad = np.flatnonzero(rho < -feas_tol(p))
        if bad.size:
            raise InfeasibleParameters(
                f"negative curvature radii at indices {bad.tolist()[:20]}", bad)
    th = grid(p.size)
    q = tangential_coeffs(p)
    c, s = np.cos(th), np.sin(th)
    xy = np.stack([p * c - q * s, p * s + q * c], axis=1)
    return ConvexPolygon(xy, th, "normal")


def vertex_jacobian(n: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse maps (Jx, Jy) with A_x = Jx p and A_y = Jy p.

    Vertex i depends on p_{i-1}, p_i and p_{i+1} only.
    """
    th = grid(n)
    h = 2 * np.pi / n
    c, s = np.cos(th), np.sin(th)
    i = np.arange(n)
    k = 1 / (2 * np.sin(h))
    rows = np.concatenate([i, i, i])
    cols = np.concatenate([i, (i + 1) % n, (i - 1) % n])
    # t_i = (-s, c)
    jx = np.concatenate([c, -s * k, s * k])
    jy = np.concatenate([s, c * k, -c * k])
    Jx = sp.csr_matrix((jx, (rows, cols)), shape=(n, n))
    Jy = sp.csr_matrix((jy, (rows, cols)), shape=(n, n))
    return Jx, Jy


# -- linear constraints ----------------------------------------------------

@dataclass(frozen=True)
class LinearConstraintSet:
    """Rows  G x >= g  (inequalities) and  A x = b  (equalities) over n parameters."""

    n: int
    G: np.ndarray = None
    g: np.ndarray = None
    A: np.ndarray = None
    b: np.ndarray = None
    ineq_labels: tuple = ()
    eq_labels: tuple = ()

    def __post_init__(self):
        for name in ("G", "A"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, np.zeros((0, self.n)))
        if self.g is None:
            object.__setattr__(self, "g", np.zeros(0))
        if self.b is None:
            object.__setattr__(self, "b", np.zeros(0))
        G = np.asarray(self.G, dtype=float).reshape(-1, self.n)
        A = np.asarray(self.A, dtype=float).reshape(-1, self.n)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float).ravel())
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).ravel())
        if not self.ineq_labels:
            object.__setattr__(self, "ineq_labels", ("ineq",) * G.shape[0])
        if not self.eq_labels:
            object.__setattr__(self, "eq_labels", ("eq",) * A.shape[0])
        if (G.shape[0] != self.g.size or A.shape[0] != self.b.size
                or len(self.ineq_labels) != G.shape[0]
                or len(self.eq_labels) != A.shape[0]):
            raise ValueError("inconsistent constraint dimensions")

    @property
    def n_ineq(self) -> int:
        return self.G.shape[0]

    @property
    def n_eq(self) -> int:
        return self.A.shape[0]

    def __add__(self, other: "LinearConstraintSet") -> "LinearConstraintSet":
        if other.n != self.n:
            raise ValueError("constraint sets over different dimensions")
        return LinearConstraintSet(
            self.n,
            np.vstack([self.G, other.G]), np.concatenate([self.g, other.g]),
            np.vstack([self.A, other.A]), np.concatenate([self.b, other.b]),
            tuple(self.ineq_labels) + tuple(other.ineq_labels),
            tuple(self.eq_labels) + tuple(other.eq_labels),
        )

    def slack(self, x) -> np.ndarray:
        return self.G @ np.asarray(x, dtype=float) - self.g

    def residual(self, x) -> np.ndarray:
        return self.A @ np.asarray(x, dtype=float) - self.b

    def max_violation(self, x) -> float:
        s = self.slack(x)
        r = self.residual(x)
        v = 0.0
        if s.size:
            v = max(v, float(-s.min()))
        if r.size:
            v = max(v, float(np.abs(r).max()))
        return v

    def violations(self, x, tol: float = 0.0) -> list[tuple[str, int, str, float]]:
        """List (kind, row, label, amount) for every violated row."""
        out = []
        for j, s in enumerate(self.slack(x)):
            if s < -tol:
                out.append(("ineq", j, self.ineq_labels[j], float(-s)))
        for j, r in enumerate(self.residual(x)):
            if abs(r) > tol:
                out.append(("eq", j, self.eq_labels[j], float(abs(r))))
        return out


def empty_constraints(n: int) -> LinearConstraintSet:
    return LinearConstraintSet(n)


def convexity_constraints(n: int, mode: str = "rigorous") -> LinearConstraintSet:
    """n three-term rows; rigorous rows are p_{i+1} + p_{i-1} - 2 p_i cos h >= 0."""
    if n < 5:
        raise ValueError("need at least 5 grid angles")
    h = 2 * np.pi / n
    if mode == "rigorous":
        side, diag = 1.0, -2 * np.cos(h)
    elif mode == "fd":
        side, diag = 1 / h ** 2, 1 - 2 / h ** 2
    elif mode == "fe":
        side, diag = 1 / 6 + 1 / h ** 2, 2 / 3 - 2 / h ** 2
    else:
        raise ValueError(f"unknown convexity mode {mode!r}")
    G = np.zeros((n, n))
    i = np.arange(n)
    G[i, i] = diag
    G[i, (i + 1) % n] += side
    G[i, (i - 1) % n] += side
    return LinearConstraintSet(n, G, np.zeros(n), ineq_labels=(f"convexity[{mode}]",) * n)


def _per_pair(value, m):
    if value is None:
        return np.full(m, np.nan)
    arr = np.asarray(value, dtype=float)
    return np.full(m, float(arr)) if arr.ndim == 0 else arr.astype(float)


def width_constraints(n: int, lower=None, upper=None) -> LinearConstraintSet:
    """Rows w_i <= p_i + p_{i+n/2} <= W_i for i < n/2.

    Bounds may be scalars, per-pair arrays or None; NaN entries drop the row.
    Pairs with w_i == W_i become equality rows.
    """
    if n % 2:
        raise ValueError("width constraints need an even number of angles")
    m = n // 2
    lo, hi = _per_pair(lower, m), _per_pair(upper, m)
    G, g, A, b, gl, al = [], [], [], [], [], []
    for i in range(m):
        row = np.zeros(n)
        row[i] = row[i + m] = 1.0
        if np.isfinite(lo[i]) and np.isfinite(hi[i]) and lo[i] == hi[i]:
            A.append(row)
            b.append(lo[i])
            al.append("width")
            continue
        if np.isfinite(lo[i]):
            G.append(row)
            g.append(lo[i])
            gl.append("width_lower")
        if np.isfinite(hi[i]):
            G.append(-row)
            g.append(-hi[i])
            gl.append("width_upper")
    return LinearConstraintSet(n, np.array(G).reshape(-1, n), g,
                               np.array(A).reshape(-1, n), b, tuple(gl), tuple(al))


def constant_width(n: int, w: float) -> LinearConstraintSet:
    return width_constraints(n, w, w)


def diameter_constraint(n: int, d: float) -> LinearConstraintSet:
    """Upper width d in every direction and width exactly d for pair 0."""
    lower = np.full(n // 2, np.nan)
    lower[0] = d
    return width_constraints(n, lower, d)


def inclusion_constraints(outer=None, inner=None, n: int | None = None,
                          edge_normals=None) -> LinearConstraintSet:
    """Pointwise bounds inner_i <= p_i <= outer_i.

    ``outer``/``inner`` are SupportVectors, shape descriptors, or value
    arrays.  When ``edge_normals`` (angles of the outer polygon's edge
    normals) is given, upper rows are emitted only at the grid indices
    nearest to those normals.
    """
    def values(obj):
        if obj is None:
            return None
        if isinstance(obj, (Shape, dict)):
            if n is None:
                raise ValueError("n is required for shape descriptors")
            return sample_support(obj, n).values
        return _as_values(obj)

    up, lo = values(outer), values(inner)
    size = n or (up.size if up is not None else lo.size)
    for v in (up, lo):
        if v is not None and v.size != size:
            raise ValueError("inclusion bounds on a different grid")
    rows, g, labels = [], [], []
    eye = np.eye(size)
    if up is not None:
        if edge_normals is not None:
            h = 2 * np.pi / size
            idx = sorted({int(np.round(np.mod(a, 2 * np.pi) / h)) % size for a in edge_normals})
        else:
            idx = range(size)
        for i in idx:
            rows.append(-eye[i])
            g.append(-up[i])
            labels.append("inclusion_outer")
    if lo is not None:
        for i in range(size):
            rows.append(eye[i])
            g.append(lo[i])
            labels.append("inclusion_inner")
    return LinearConstraintSet(size, np.array(rows).reshape(-1, size), g, ineq_labels=tuple(labels))


def box_constraints(n: int, lower=None, upper=None) -> LinearConstraintSet:
    """Pointwise bounds lower <= x_i <= upper (scalars or arrays)."""
    rows, g, labels = [], [], []
    eye = np.eye(n)
    if lower is not None:
        lo = np.broadcast_to(np.asarray(lower, dtype=float), (n,))
        rows += list(eye)
        g += list(lo)
        labels += ["box_lower"] * n
    if upper is not None:
        hi = np.broadcast_to(np.asarray(upper, dtype=float), (n,))
        rows += list(-eye)
        g += list(-hi)
        labels += ["box_upper"] * n
    return LinearConstraintSet(n, np.array(rows).reshape(-1, n), g, ineq_labels=tuple(labels))


def symmetry_constraints(n: int) -> LinearConstraintSet:
    """Central symmetry p_i = p_{i+n/2}."""
    if n % 2:
        raise ValueError("symmetry constraints need an even number of angles")
    m = n // 2
    A = np.zeros((m, n))
    A[np.arange(m), np.arange(m)] = 1.0
    A[np.arange(m), np.arange(m) + m] = -1.0
    return LinearConstraintSet(n, A=A, b=np.zeros(m), eq_labels=("symmetry",) * m)


def centering_constraints(n: int) -> LinearConstraintSet:
    """Pin translations: sum p_i cos theta_i = sum p_i sin theta_i = 0.

    The discrete Steiner point sits at the origin; adding a cos + b sin to p
    translates the polygon exactly, so these rows remove that flat direction.
    """
    th = grid(n)
    return LinearConstraintSet(n, A=np.stack([np.cos(th), np.sin(th)]), b=np.zeros(2),
                               eq_labels=("centering", "centering"))


def mean_constraint(n: int, value: float) -> LinearConstraintSet:
    """Fix the mean parameter value; pins the scale of dilation-invariant problems."""
    return LinearConstraintSet(n, A=np.full((1, n), 1.0 / n), b=[value], eq_labels=("scale",))
