"""Independent checks: closed-form triangle identities, finite-difference
gradients, convexity sweeps and approximation-theorem harnesses.

Everything here recomputes quantities from raw coordinates (cross products,
dense support sampling) rather than reusing the production formulas.
"""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np

from . import geometry as geo
from .shapes import Shape
from .support import LinearConstraintSet, SupportVector, convexity_constraints, feas_tol, grid, vertices

DEFAULT_SEED = 20240531


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    bound: float
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


def _cross_area(a, b, c):
    """Oriented area of triangles given as (..., 2) arrays."""
    return 0.5 * ((b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1])
                  - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0]))


def _frame(theta):
    theta = np.asarray(theta, dtype=float)
    r = np.stack([np.cos(theta), np.sin(theta)], -1)
    t = np.stack([-np.sin(theta), np.cos(theta)], -1)
    return r, t


def _triangle(p, q, h, t):
    """Vertices A_j = p_j r_j + q_j t_j at angles t + (j - 2) h, j = 1, 2, 3."""
    pts = []
    for j in (1, 2, 3):
        r, tt = _frame(t + (j - 2) * h)
        pts.append(p[j][..., None] * r + q[j][..., None] * tt)
    return pts


# -- appendix identities -----------------------------------------------------

def appendix_identity_fd(rho1, rho2, rho3, h, t=0.0, p1=1.0, p3=1.0):
    """Area minus the h^3 leading term for the finite-difference scheme.

    p0, p2, p4 are recovered from the curvature radii
    rho_j = p_j + (p_{j+1} - 2 p_j + p_{j-1}) / h^2 with p1, p3 free.
    """
    rho1, rho2, rho3, p1, p3, t = np.broadcast_arrays(*(np.asarray(v, dtype=float)
                                                        for v in (rho1, rho2, rho3, p1, p3, t)))
    h2 = h * h
    p2 = (rho2 * h2 - p1 - p3) / (h2 - 2)
    p0 = h2 * (rho1 - p1) - p2 + 2 * p1
    p4 = h2 * (rho3 - p3) - p2 + 2 * p3
    p = [p0, p1, p2, p3, p4]
    q = {j: (p[j + 1] - p[j - 1]) / (2 * h) for j in (1, 2, 3)}
    area = _cross_area(*_triangle(p, q, h, t))
    lead = h ** 3 / 48 * (6 * rho1 * rho2 + 12 * rho1 * rho3 + 6 * rho2 * rho3
                          + (p1 - p3) * (rho1 - rho3))
    return area - lead


def rigorous_area_closed_form(rho1, rho2, rho3, h):
    return (rho2 * (rho1 + rho3) + 2 * rho1 * rho3 * np.cos(h)) * np.sin(h / 2) ** 2 * np.tan(h / 2)


def appendix_identity_rigorous(rho1, rho2, rho3, h, t=0.0, p1=0.0, p3=0.0):
    """Relative residual between the cross-product area and the closed form.

    p1 and p3 only fix a translation; the default 0 puts the origin on two
    of the support lines, so the vertices stay O(rho h) from the origin and
    the cross product is well conditioned.
    """
    rho1, rho2, rho3, t, p1, p3 = np.broadcast_arrays(*(np.asarray(v, dtype=float)
                                                       for v in (rho1, rho2, rho3, t, p1, p3)))
    c, d = np.cos(h), 2 - 2 * np.cos(h)
    p2 = (p1 + p3 - rho2 * d) / (2 * c)
    p0 = rho1 * d + 2 * p1 * c - p2
    p4 = rho3 * d + 2 * p3 * c - p2
    p = [p0, p1, p2, p3, p4]
    q = {j: (p[j + 1] - p[j - 1]) / (2 * np.sin(h)) for j in (1, 2, 3)}
    area = _cross_area(*_triangle(p, q, h, t))
    closed = rigorous_area_closed_form(rho1, rho2, rho3, h)
    scale = ((np.abs(rho2) * (np.abs(rho1) + np.abs(rho3)) + 2 * np.abs(rho1 * rho3))
             * np.sin(h / 2) ** 2 * np.tan(h / 2))
    return (area - closed) / np.maximum(scale, 1e-300)


def appendix_identity_gauge(g1, g2, g3, h, t=0.0):
    g1, g2, g3, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (g1, g2, g3, t)))
    pts = [(_frame(t + k * h)[0]) / g[..., None] for k, g in zip((-1, 0, 1), (g1, g2, g3))]
    area = _cross_area(*pts)
    closed = (g1 + g3 - 2 * g2 * np.cos(h)) * np.sin(h) / (2 * g1 * g2 * g3)
    scale = (g1 + g3 + 2 * g2) * np.sin(h) / (2 * g1 * g2 * g3)
    return (area - closed) / scale


def order_fit(hs, residuals) -> float:
    """Least-squares slope of log|residual| against log h."""
    return float(np.polyfit(np.log(hs), np.log(np.abs(residuals)), 1)[0])


def identity_suite(cases: int = 10_000, seed: int = DEFAULT_SEED, tol: float = 1e-12):
    rng = np.random.default_rng(seed)
    out = []
    rho = rng.uniform(-10, 10, (3, cases))
    h = rng.uniform(0.05, np.pi / 4, cases)
    t = rng.uniform(0, 2 * np.pi, cases)
    r = np.abs(appendix_identity_rigorous(rho[0], rho[1], rho[2], h, t)).max()
    out.append(CheckResult("identity.rigorous_triangle_area", bool(r <= tol), float(r), tol,
                           f"{cases} cases, rho in [-10, 10]"))
    g = rng.uniform(0.1, 10, (3, cases))
    r = np.abs(appendix_identity_gauge(g[0], g[1], g[2], h, t)).max()
    out.append(CheckResult("identity.gauge_triangle_area", bool(r <= tol), float(r), tol,
                           f"{cases} cases, gamma in [0.1, 10]"))
    hs = 0.2 / 2 ** np.arange(6)
    slopes = []
    for _ in range(5):
        rr = rng.uniform(0.1, 10, 3)
        p1, p3 = rng.uniform(0.5, 2, 2)
        t0 = rng.uniform(0, 2 * np.pi)
        slopes.append(order_fit(hs, [appendix_identity_fd(*rr, hh, t0, p1, p3) for hh in hs]))
    s = min(slopes)
    out.append(CheckResult("identity.fd_expansion_order", bool(s >= 4.5), s, 4.5,
                           "log-log slope of the residual over 6 halvings"))
    return out


# -- random feasible vectors ---------------------------------------------------

def random_support_vector(n: int, rng, rho_range=(0.1, 10.0), zero_fraction: float = 0.0,
                          translation: float = 0.0) -> np.ndarray:
    """Random p whose rigorous curvature radii are all >= 0.

    Radii are drawn in ``rho_range`` (a ``zero_fraction`` of them set to 0),
    two of them are raised to close the polygon, and p is recovered by FFT.
    """
    th = grid(n)
    rho = rng.uniform(*rho_range, n)
    if zero_fraction > 0:
        rho[rng.random(n) < zero_fraction] = 0.0
    c = np.sum(rho * np.exp(1j * th))
    if abs(c) > 0:
        # add mass at the two grid angles bracketing arg(-c)
        phi = np.angle(-c) % (2 * np.pi)
        h = 2 * np.pi / n
        j = int(np.floor(phi / h)) % n
        k = (j + 1) % n
        M = np.array([[np.cos(th[j]), np.cos(th[k])], [np.sin(th[j]), np.sin(th[k])]])
        ab = np.linalg.solve(M, [-c.real, -c.imag])
        rho[j] += max(ab[0], 0.0)
        rho[k] += max(ab[1], 0.0)
    h = 2 * np.pi / n
    symbol = (2 * np.cos(h * np.arange(n)) - 2 * np.cos(h)) / (2 - 2 * np.cos(h))
    rhat = np.fft.fft(rho)
    phat = np.zeros(n, dtype=complex)
    ok = np.abs(symbol) > 1e-12
    phat[ok] = rhat[ok] / symbol[ok]
    p = np.fft.ifft(phat).real
    if translation:
        a, b = rng.uniform(-translation, translation, 2)
        p = p + a * np.cos(th) + b * np.sin(th)
    return p


def _batch_is_convex(P: np.ndarray) -> np.ndarray:
    """Vectorized convexity test for polygons stacked as (m, n, 2)."""
    a = P
    b = np.roll(P, -1, axis=1)
    c = np.roll(P, -2, axis=1)
    cr = (b[..., 0] - a[..., 0]) * (c[..., 1] - b[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - b[..., 0])
    scale = np.maximum(1.0, np.abs(P).max(axis=(1, 2))) ** 2
    return np.all(cr >= -1e-12 * scale[:, None], axis=1)


def convexity_sweep(count: int = 100_000, n_range=(6, 64), seed: int = DEFAULT_SEED):
    """Random rigorous-feasible vectors must all give convex polygons."""
    rng = np.random.default_rng(seed)
    ns = rng.integers(n_range[0], n_range[1] + 1, count)
    failures = 0
    for n in np.unique(ns):
        m = int(np.sum(ns == n))
        th = grid(int(n))
        r, t = _frame(th)
        zf = rng.uniform(0, 0.8, m)
        ps = np.stack([random_support_vector(int(n), rng, zero_fraction=z, translation=5.0) for z in zf])
        q = (np.roll(ps, -1, 1) - np.roll(ps, 1, 1)) / (2 * np.sin(2 * np.pi / n))
        V = ps[..., None] * r + q[..., None] * t
        failures += int(np.sum(~_batch_is_convex(V)))
    return CheckResult("convexity.rigorous_sweep", failures == 0, float(failures), 0.0,
                       f"{count} vectors, n in [{n_range[0]}, {n_range[1]}]")


def fd_counterexample(n: int = 32) -> np.ndarray:
    """A vector passing the finite-difference rows whose polygon is not convex.

    p = c + cos(theta) is a translated disk.  Under the finite-difference
    scheme the vertices trace a circle of radius c plus a double-frequency
    epicycle of radius b = (1 - sin h / h) / 2, which is non-convex for
    2b < c < 4b; c = 3b also satisfies the finite-difference rows.
    """
    h = 2 * np.pi / n
    b = (1 - np.sin(h) / h) / 2
    return 3 * b + np.cos(grid(n))


def fd_vertices(p: np.ndarray) -> np.ndarray:
    n = p.size
    h = 2 * np.pi / n
    r, t = _frame(grid(n))
    q = (np.roll(p, -1) - np.roll(p, 1)) / (2 * h)
    return p[:, None] * r + q[:, None] * t


def counterexample_check(n: int = 32) -> CheckResult:
    p = fd_counterexample(n)
    fd_slack = convexity_constraints(n, "fd").slack(p).min()
    convex, bad = geo.is_convex(geo.polygon(fd_vertices(p)))
    passed = fd_slack >= 0 and not convex
    return CheckResult("convexity.fd_counterexample", bool(passed), float(fd_slack), 0.0,
                       f"n={n}, fd rows min slack {fd_slack:.3e}, reflex vertices {len(bad)}")


# -- finite-difference gradients ---------------------------------------------

def fd_gradient(fn, x, step: float = 1e-6, constraints: LinearConstraintSet | None = None,
                relative: bool = True) -> np.ndarray:
    """Central differences of ``fn(x)[0]``.

    With ``constraints`` the step in coordinate i is clipped to half the
    distance at which an inequality row would become active, so both probe
    points stay feasible.
    """
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    slack = constraints.slack(x) if constraints is not None and constraints.n_ineq else None
    for i in range(x.size):
        eps = step * max(1.0, abs(x[i])) if relative else step
        if slack is not None:
            col = np.abs(constraints.G[:, i])
            hit = col > 0
            if np.any(hit):
                eps = min(eps, 0.5 * float(np.min(slack[hit] / col[hit])))
            if eps <= 0:
                raise ValueError(f"coordinate {i} is pinned by an active constraint")
        e = np.zeros_like(x)
        e[i] = eps
        g[i] = (fn(x + e)[0] - fn(x - e)[0]) / (2 * eps)
    return g


def relative_gradient_error(g, g_ref) -> float:
    return float(np.abs(np.asarray(g) - g_ref).max() / max(np.abs(g_ref).max(), 1e-300))


# -- approximation theorem harness -------------------------------------------

THEOREM_FIXTURES = {
    "disk": Shape("disk", radius=1.0),
    "square": Shape("square", side=1.0),
    "reuleaux": Shape("reuleaux", width=1.0),
}


def lemma_boundary_area(p_prev: float, p_next: float, h: float, t: float = 0.0) -> float:
    """Area of the triangle cut by three support lines when p_i sits on the threshold.

    With p_i = (p_{i+1} + p_{i-1}) / (2 cos h) the three lines are concurrent.
    """
    p_i = (p_next + p_prev) / (2 * np.cos(h))
    lines = [(t - h, p_prev), (t, p_i), (t + h, p_next)]

    def meet(l1, l2):
        (a1, c1), (a2, c2) = l1, l2
        M = np.array([[np.cos(a1), np.sin(a1)], [np.cos(a2), np.sin(a2)]])
        return np.linalg.solve(M, [c1, c2])

    X = meet(lines[0], lines[1])
    Y = meet(lines[1], lines[2])
    Z = meet(lines[0], lines[2])
    return float(_cross_area(X, Y, Z))


def theorem_suite(ns=(8, 16, 32, 64, 128), fixtures=None, samples: int = 20000):
    """Hausdorff bound, sampled feasibility and the lemma threshold case."""
    fixtures = fixtures or THEOREM_FIXTURES
    out = []
    for name, shape in fixtures.items():
        for n in ns:
            sv = SupportVector(shape.support(grid(n)))
            slack = convexity_constraints(n).slack(sv.values).min()
            tol = feas_tol(sv.values)
            out.append(CheckResult(f"theorem.sampled_feasible.{name}.n{n}", bool(slack >= -tol),
                                   float(slack), -tol))
            P = vertices(sv)
            th = np.concatenate([np.linspace(0, 2 * np.pi, samples, endpoint=False),
                                 P.edge_normal_angles()])
            d = float(np.abs(P.support(th) - shape.support(th)).max())
            bound = 0.5 * shape.diameter() * np.tan(np.pi / n)
            out.append(CheckResult(f"theorem.hausdorff_bound.{name}.n{n}", bool(d <= bound),
                                   d, float(bound)))
    rng = np.random.default_rng(DEFAULT_SEED)
    worst = 0.0
    for _ in range(100):
        a, b = rng.uniform(0.1, 10, 2)
        h = 2 * np.pi / rng.integers(5, 200)
        area = abs(lemma_boundary_area(a, b, h, rng.uniform(0, 2 * np.pi)))
        worst = max(worst, area / max(a, b) ** 2)
    out.append(CheckResult("theorem.lemma_threshold_zero_area", bool(worst <= 1e-12), worst, 1e-12))
    return out


# -- gradient suite ------------------------------------------------------------

def gradient_suite(points: int = 5, seed: int = DEFAULT_SEED, fem_level: int = 3, n: int = 24,
                   include_fem: bool = True):
    """FD checks for every functional plus the eigenvalue sign on a disk dilation."""
    from . import functionals as F

    rng = np.random.default_rng(seed)
    xs = []
    for _ in range(points):
        p = random_support_vector(n, rng, rho_range=(0.5, 2.0))
        xs.append(p / p.mean())
    geometric = {
        "area": lambda x: F.area_functional(x),
        "perimeter": lambda x: F.perimeter_functional(x),
        "area_perimeter": lambda x: F.area_perimeter_tradeoff(x, 0.7),
        "mahler": F.mahler_functional,
        "gauge_area": F.gauge_area_functional,
    }
    out = []
    for name, fn in geometric.items():
        err = max(relative_gradient_error(fn(x)[1], fd_gradient(fn, x, 1e-6)) for x in xs)
        out.append(CheckResult(f"gradient.{name}", bool(err <= 1e-6), err, 1e-6))
    if include_fem:
        st = F.FEMSettings(level=fem_level)
        fem_fns = {
            "eigenvalue.support.k1": lambda x: F.eigenvalue_functional(x, 1, "times_area", "support", st),
            "eigenvalue.gauge.k2": lambda x: F.eigenvalue_functional(x, 2, "times_area", "gauge", st),
            "pde_integral.support.f1": lambda x: F.pde_integral_functional(0.6 * x, "f1", "support", st),
            "pde_integral.gauge.f2": lambda x: F.pde_integral_functional(x, "f2", "gauge", st),
        }
        chain = {"pde_integral.support.f1": 0.6}
        for name, fn in fem_fns.items():
            err = 0.0
            for x in xs[:2]:
                g = fn(x)[1] * chain.get(name, 1.0)
                err = max(err, relative_gradient_error(g, fd_gradient(fn, x, 1e-4)))
            out.append(CheckResult(f"gradient.{name}", bool(err <= 1e-2), err, 1e-2))
        # sign: dilating a disk must lower lambda_1
        x = np.ones(n)
        _, g = F.eigenvalue_functional(x, 1, "raw", "support", st)
        dil = float(g.sum())
        out.append(CheckResult("gradient.eigenvalue_sign_disk_dilation", bool(dil < 0), dil, 0.0,
                               "d lambda_1 / dt along p -> p + t must be negative"))
    return out


SUITES = {
    "identities": lambda: identity_suite(),
    "convexity": lambda: [convexity_sweep(), counterexample_check()],
    "theorems": lambda: theorem_suite(),
    "gradients": lambda: gradient_suite(),
}


def run_suite(name: str) -> dict:
    """Run one suite (or ``all``) and return a JSON-ready report."""
    names = list(SUITES) if name == "all" else [name]
    if any(s not in SUITES for s in names):
        raise KeyError(f"unknown suite {name!r}; choose from {sorted(SUITES) + ['all']}")
    report = {"suites": {}, "passed": True, "seed": DEFAULT_SEED}
    for s in names:
        t0 = time.perf_counter()
        checks = SUITES[s]()
        report["suites"][s] = {"checks": [c.to_dict() for c in checks],
                               "passed": all(c.passed for c in checks),
                               "seconds": time.perf_counter() - t0}
        report["passed"] &= report["suites"][s]["passed"]
    return report
