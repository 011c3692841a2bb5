"""Interior-point minimization under linear constraints.

Equalities are eliminated with an orthonormal null-space basis; the
inequalities are handled by a log barrier whose parameter shrinks
geometrically.  Each barrier stage runs primal-dual Newton-like steps that
combine a model of the objective Hessian (finite-difference, SR1 or damped
BFGS) with the exact barrier Hessian.  A fraction-to-boundary rule keeps
every accepted iterate strictly feasible.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog

from .support import LinearConstraintSet, grid

log = logging.getLogger(__name__)


class InfeasibleStart(ValueError):
    def __init__(self, message, families=()):
        super().__init__(message)
        self.families = list(families)


class ObjectiveError(RuntimeError):
    """Objective evaluation failed; ``x`` holds the offending iterate."""

    def __init__(self, message, x):
        super().__init__(message)
        self.x = np.array(x)


@dataclass
class NlpProblem:
    objective: object                      # x -> (value, gradient)
    constraints: LinearConstraintSet
    x0: np.ndarray | None = None
    tol_kkt: float = 1e-6
    tol_feas: float = 1e-9
    max_iter: int = 1000
    max_evals: int = 5000
    seed: int = 0
    mu_factor: float = 0.2
    mu_min: float = 1e-11
    hessian: str = "sr1"                   # "fd", "sr1" or "bfgs"
    callback: object = None                # called as callback(x, info) on each accepted iterate
    init: dict = field(default_factory=dict)


@dataclass
class SolveReport:
    x: np.ndarray
    fun: float
    kkt: float
    violation: float
    iterations: int
    n_evals: int
    status: str
    success: bool
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["x"] = self.x.tolist()
        return d


# -- initialization ----------------------------------------------------------

def _row_norms(M):
    return np.maximum(np.linalg.norm(M, axis=1), 1e-300)


def _disk_interval(C: LinearConstraintSet, base: np.ndarray):
    """Feasible interval of c for x = c * base; returns (lo, hi, fixed)."""
    lo, hi, fixed = -np.inf, np.inf, None
    a = C.G @ base
    for aj, gj in zip(a, C.g):
        if abs(aj) < 1e-14:
            if gj > 1e-12:
                return 1.0, -1.0, None
            continue
        if aj > 0:
            lo = max(lo, gj / aj)
        else:
            hi = min(hi, gj / aj)
    ae = C.A @ base
    for aj, bj in zip(ae, C.b):
        if abs(aj) < 1e-14:
            if abs(bj) > 1e-12:
                return 1.0, -1.0, None
            continue
        c = bj / aj
        if fixed is not None and abs(c - fixed) > 1e-9 * max(1, abs(c)):
            return 1.0, -1.0, None
        fixed = c
    return lo, hi, fixed


def _max_slack_point(C: LinearConstraintSet, center: np.ndarray, radius: float):
    """LP: maximize t with G x - g >= t |G_j|, A x = b, |x - center| <= radius."""
    n = C.n
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    A_ub = np.hstack([-C.G, _row_norms(C.G)[:, None]]) if C.n_ineq else None
    b_ub = -C.g if C.n_ineq else None
    A_eq = np.hstack([C.A, np.zeros((C.n_eq, 1))]) if C.n_eq else None
    b_eq = C.b if C.n_eq else None
    bounds = [(c - radius, c + radius) for c in center] + [(None, radius)]
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        return None, -np.inf
    return res.x[:n], res.x[-1]


def _infeasible_families(C: LinearConstraintSet, center, radius):
    """Elastic LP; returns the labels of rows that need relaxation."""
    n, m = C.n, C.n_ineq
    cost = np.concatenate([np.zeros(n), np.ones(m)])
    A_ub = np.hstack([-C.G, -np.eye(m)]) if m else None
    b_ub = -C.g if m else None
    A_eq = np.hstack([C.A, np.zeros((C.n_eq, m))]) if C.n_eq else None
    bounds = [(c - radius, c + radius) for c in center] + [(0, None)] * m
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=C.b if C.n_eq else None,
                  bounds=bounds, method="highs")
    if res.status != 0:
        return sorted(set(C.eq_labels)) or ["equality"]
    v = res.x[n:]
    return sorted({C.ineq_labels[j] for j in np.flatnonzero(v > 1e-9)})


def initialize(C: LinearConstraintSet, parametrization: str = "support", radius: float | None = None,
               perturbation: float = 0.0, seed: int = 0, harmonics: int = 6) -> np.ndarray:
    """Strictly feasible start: a disk (p = r, or gamma = 1/r) when possible.

    ``radius`` is a preferred disk radius, clipped into the feasible range.
    A seeded low-frequency perturbation inside the equality null space is
    added and halved until the start stays strictly feasible.
    """
    n = C.n
    base = np.ones(n)
    lo, hi, fixed = _disk_interval(C, base)
    want = None
    if radius is not None:
        want = radius if parametrization == "support" else 1.0 / radius
    x = None
    if lo <= hi:
        if fixed is not None:
            c = fixed if lo - 1e-12 <= fixed <= hi + 1e-12 else None
        elif want is not None:
            c = min(max(want, lo), hi)
            if np.isfinite(lo) and np.isfinite(hi) and (c <= lo or c >= hi):
                c = 0.5 * (lo + hi)
            elif c <= lo:
                c = lo * 1.05 + 1e-3
            elif c >= hi:
                c = hi * 0.95
        elif np.isfinite(lo) and np.isfinite(hi):
            c = 0.5 * (lo + hi)
        elif np.isfinite(lo):
            c = max(1.0, 1.05 * lo + 1e-3) if lo <= 0 else 1.05 * lo
        elif np.isfinite(hi):
            c = min(1.0, 0.95 * hi) if hi > 0 else 1.05 * hi
        else:
            c = 1.0
        if c is not None:
            x = c * base
    scale = max(1.0, float(np.abs(x).max())) if x is not None else 1.0
    if x is None or (C.n_ineq and C.slack(x).min() <= 1e-12 * scale):
        center = x if x is not None else base * (want or 1.0)
        radius_box = 10 * max(1.0, float(np.abs(center).max()))
        lp, t = _max_slack_point(C, center, radius_box)
        if lp is None or t <= 1e-12:
            raise InfeasibleStart("no strictly feasible start found",
                                  _infeasible_families(C, center, radius_box))
        x = lp if x is None or C.max_violation(x) > 1e-9 else 0.5 * (x + lp)
    if C.n_eq and np.abs(C.residual(x)).max() > 1e-9 * scale:
        raise InfeasibleStart("equality constraints are inconsistent", sorted(set(C.eq_labels)))
    if perturbation > 0:
        rng = np.random.default_rng(seed)
        th = grid(n)
        d = np.zeros(n)
        for k in range(2, harmonics + 1):
            a, b = rng.standard_normal(2)
            d += (a * np.cos(k * th) + b * np.sin(k * th)) / k ** 2
        if C.n_eq:
            Z = sla.null_space(C.A)
            d = Z @ (Z.T @ d)
        nd = np.abs(d).max()
        if nd > 0:
            d *= perturbation * float(np.abs(x).mean()) / nd
            s0 = C.slack(x) if C.n_ineq else np.zeros(0)
            for _ in range(60):
                if not C.n_ineq or np.all(C.slack(x + d) >= 0.5 * s0):
                    x = x + d
                    break
                d *= 0.5
    return x


# -- solver ------------------------------------------------------------------

class _Counter:
    def __init__(self, fn):
        self.fn, self.n = fn, 0

    def __call__(self, x):
        self.n += 1
        try:
            v, g = self.fn(x)
        except Exception as exc:
            raise ObjectiveError(f"objective evaluation failed: {exc}", x) from exc
        return float(v), np.asarray(g, dtype=float)


class _HessianModel:
    """Objective Hessian in reduced coordinates."""

    def __init__(self, kind: str, r: int):
        if kind not in ("fd", "sr1", "bfgs"):
            raise ValueError(f"unknown hessian model {kind!r}")
        self.kind, self.H, self.fresh = kind, np.eye(r), True

    def reset(self):
        self.H = np.eye(len(self.H)) * max(1e-8, float(np.abs(np.diag(self.H)).mean()))
        self.fresh = True

    def refresh(self, grad_at, y, smin):
        """Central differences of the reduced gradient (``fd`` model only)."""
        if self.kind != "fd":
            return
        r = len(y)
        eps = min(1e-6, 0.25 * smin) if np.isfinite(smin) else 1e-6
        H = np.empty((r, r))
        for j in range(r):
            e = np.zeros(r)
            e[j] = eps
            H[:, j] = (grad_at(y + e) - grad_at(y - e)) / (2 * eps)
        self.H = 0.5 * (H + H.T)

    def update(self, sk, yk):
        if self.kind == "fd":
            return
        H = self.H
        sy = float(sk @ yk)
        if self.fresh and sy > 0:
            H = np.eye(len(H)) * (float(yk @ yk) / sy)
            self.fresh = False
        Hs = H @ sk
        if self.kind == "sr1":
            d = yk - Hs
            den = float(d @ sk)
            if abs(den) > 1e-8 * np.linalg.norm(sk) * np.linalg.norm(d):
                H = H + np.outer(d, d) / den
        else:
            sHs = float(sk @ Hs)
            if sHs > 1e-300:
                theta = 1.0 if sy >= 0.2 * sHs else 0.8 * sHs / (sHs - sy)
                rk = theta * yk + (1 - theta) * Hs
                sr = float(sk @ rk)
                if sr > 1e-300:
                    H = H - np.outer(Hs, Hs) / sHs + np.outer(rk, rk) / sr
        self.H = H


def _solve_pd(W, rhs):
    """Solve W d = rhs, shifting W by delta*I until it is positive definite."""
    scale = max(1e-12, float(np.abs(np.diag(W)).max()))
    delta = 0.0
    for _ in range(60):
        try:
            cho = sla.cho_factor(W + delta * np.eye(len(W)) if delta else W)
            return sla.cho_solve(cho, rhs), delta
        except np.linalg.LinAlgError:
            delta = max(1e-10 * scale, 10 * delta)
    raise np.linalg.LinAlgError("could not regularize the Newton matrix")


def solve(problem: NlpProblem) -> SolveReport:
    """Minimize the objective over {G x >= g, A x = b} from a strictly feasible start."""
    C = problem.constraints
    x0 = problem.x0
    if x0 is None:
        x0 = initialize(C, seed=problem.seed, **problem.init)
    x0 = np.asarray(x0, dtype=float)
    scale_x = max(1.0, float(np.abs(x0).max()))
    if C.n_eq and np.abs(C.residual(x0)).max() > 1e-8 * scale_x:
        raise InfeasibleStart("start violates equality constraints", sorted(set(C.eq_labels)))
    if C.n_ineq and C.slack(x0).min() <= 0:
        bad = np.flatnonzero(C.slack(x0) <= 0)
        raise InfeasibleStart("start is not strictly feasible",
                              sorted({C.ineq_labels[j] for j in bad}))

    Z = sla.null_space(C.A) if C.n_eq else np.eye(C.n)
    r = Z.shape[1]
    if C.n_ineq:
        norms = _row_norms(C.G)
        Bfull = (C.G @ Z) / norms[:, None]
        keep = np.linalg.norm(Bfull, axis=1) > 1e-12
        B = Bfull[keep]
        s = (C.G @ x0 - C.g)[keep] / norms[keep]
    else:
        B, s = np.zeros((0, r)), np.zeros(0)
    m = s.size
    fun = _Counter(problem.objective)

    def x_of(y):
        return x0 + Z @ y

    y = np.zeros(r)
    f_raw, g_raw = fun(x0)
    gnorm = float(np.abs(Z.T @ g_raw).max()) if r else 0.0
    fscale = 1.0 / min(max(gnorm, 1e-8), 1e8) if gnorm > 0 else 1.0
    f, gy = f_raw * fscale, fscale * (Z.T @ g_raw)

    def grad_at(yv):
        return fscale * (Z.T @ fun(x_of(yv))[1])

    if m:
        bar = float(np.abs(B.T @ (1 / s)).max())
        mu = float(np.clip(np.abs(gy).max() / bar, 1e-8, 1.0)) if bar > 0 else 1e-3
        lam = mu / s
    else:
        mu, lam = 0.0, np.zeros(0)
    model = _HessianModel(problem.hessian, r)
    history = []
    status = "max_iter"
    best = (f_raw, x0.copy())
    it = 0

    def kkt_error(mu_target):
        stat = float(np.abs(gy - B.T @ lam).max()) if r else 0.0
        comp = float(np.abs(s * lam - mu_target).max()) if m else 0.0
        return max(stat, comp)

    def phi(fv, sv):
        return fv - mu * np.sum(np.log(sv)) if m else fv

    stale = True
    while True:
        kkt = kkt_error(0.0)
        if kkt <= problem.tol_kkt and (m == 0 or mu <= problem.tol_kkt):
            status = "converged"
            break
        if m and mu > problem.mu_min and kkt_error(mu) <= 10 * mu:
            mu = max(problem.mu_min, problem.mu_factor * mu)
            continue
        if it >= problem.max_iter:
            break
        if fun.n >= problem.max_evals:
            status = "max_evals"
            break
        it += 1
        if stale:
            model.refresh(grad_at, y, s.min() if m else np.inf)
            stale = model.kind != "fd"
        sigma = lam / s if m else np.zeros(0)
        W = model.H + (B.T * sigma) @ B if m else model.H
        grad_phi = gy - mu * (B.T @ (1 / s)) if m else gy
        dy = -_solve_pd(W, grad_phi)[0]
        ds = B @ dy
        dlam = mu / s - lam - sigma * ds if m else np.zeros(0)
        tau = max(0.99, 1 - mu)
        alpha, alpha_d = 1.0, 1.0
        if m:
            neg = ds < 0
            if np.any(neg):
                alpha = min(1.0, float(np.min(-tau * s[neg] / ds[neg])))
            negd = dlam < 0
            if np.any(negd):
                alpha_d = min(1.0, float(np.min(-tau * lam[negd] / dlam[negd])))
        phi0, slope = phi(f, s), float(grad_phi @ dy)
        accepted = False
        if slope < 0:
            for _ in range(50):
                s_new = s + alpha * ds
                if m and np.any(s_new <= 0):
                    alpha *= 0.5
                    continue
                f_new_raw, g_new_raw = fun(x_of(y + alpha * dy))
                f_new = f_new_raw * fscale
                if phi(f_new, s_new) <= phi0 + 1e-4 * alpha * slope:
                    accepted = True
                    break
                alpha *= 0.5
        if not accepted:
            if model.kind != "fd" and not model.fresh:
                model.reset()
                continue
            if m and mu > max(problem.mu_min, problem.tol_kkt):
                mu = max(problem.mu_min, problem.mu_factor * mu)
                lam = mu / s
                continue
            status = "line_search_failed"
            break
        gy_new = fscale * (Z.T @ g_new_raw)
        sk, yk = alpha * dy, gy_new - gy
        y, s, f, gy = y + sk, s_new, f_new, gy_new
        if m:
            lam = np.clip(lam + alpha_d * dlam, mu / (1e10 * s), 1e10 * mu / s)
        model.update(sk, yk)
        stale = True
        x_cur = x_of(y)
        if f_new_raw < best[0]:
            best = (f_new_raw, x_cur.copy())
        history.append(f_new_raw)
        if problem.callback is not None:
            problem.callback(x_cur, {"iteration": it, "fun": f_new_raw, "mu": mu, "kkt": kkt})

    x = x_of(y)
    f_final = f / fscale
    if status != "converged" and best[0] < f_final:
        x, f_final = best[1], best[0]
    viol = C.max_violation(x)
    success = status == "converged" and viol <= problem.tol_feas * scale_x
    log.info("solve: %s after %d iterations (kkt %.2e)", status, it, kkt)
    return SolveReport(x, float(f_final), float(kkt), float(viol), it, fun.n, status, success, history)
