import json

import numpy as np
import pytest

from convexshape import functionals as F
from convexshape.geometry import is_convex
from convexshape.optimizer import InfeasibleStart, NlpProblem, initialize, solve
from convexshape.shapes import Shape
from convexshape.support import (
    box_constraints, centering_constraints, constant_width, convexity_constraints, inclusion_constraints,
    vertices, width_constraints,
)


def quadratic(target):
    return lambda x: (float(np.sum((x - target) ** 2)), 2 * (x - target))


def test_feasible_quadratic_reaches_tight_kkt():
    n = 16
    rep = solve(NlpProblem(quadratic(1.0), convexity_constraints(n), x0=np.full(n, 2.0), tol_kkt=1e-8))
    assert rep.success and rep.kkt <= 1e-8
    assert np.allclose(rep.x, 1.0, atol=1e-6)
    assert rep.fun < 1e-10


def test_active_constraint_quadratic():
    # projection of a target outside a box: the optimum sits on the bound
    n = 10
    C = convexity_constraints(n) + box_constraints(n, None, 1.0)
    rep = solve(NlpProblem(quadratic(1.5), C, x0=np.full(n, 0.5), tol_kkt=1e-8))
    assert rep.success
    assert np.allclose(rep.x, 1.0, atol=1e-6)
    assert rep.violation <= 1e-9


@pytest.mark.parametrize("hessian", ["sr1", "bfgs", "fd"])
def test_hessian_models_reuleaux(hessian):
    n = 64
    C = convexity_constraints(n) + constant_width(n, 1.0) + centering_constraints(n)
    prob = NlpProblem(lambda x: F.area_functional(x, check=False), C, hessian=hessian,
                      init={"perturbation": 0.3}, max_evals=40000)
    rep = solve(prob)
    assert rep.success, rep.status
    assert rep.fun == pytest.approx((np.pi - np.sqrt(3)) / 2, rel=1e-2)


def test_min_width_triangle():
    n = 240
    C = convexity_constraints(n) + width_constraints(n, 1.0, None) + centering_constraints(n)
    best = min(solve(NlpProblem(lambda x: F.area_functional(x, check=False), C, seed=s,
                                init={"radius": 0.6, "perturbation": 0.3})).fun for s in (1, 2))
    assert best == pytest.approx(1 / np.sqrt(3), rel=1e-2)


def test_iterates_stay_convex():
    n = 48
    C = convexity_constraints(n) + constant_width(n, 1.0) + centering_constraints(n)
    seen = []

    def cb(x, info):
        seen.append(is_convex(vertices(x, check=False))[0])
        assert {"iteration", "fun", "mu", "kkt"} <= set(info)

    solve(NlpProblem(lambda x: F.area_functional(x, check=False), C, callback=cb, init={"perturbation": 0.3}))
    assert seen and all(seen)


def test_deterministic_runs():
    n = 40
    C = convexity_constraints(n) + constant_width(n, 1.0) + centering_constraints(n)
    make = lambda: NlpProblem(lambda x: F.area_functional(x, check=False), C, seed=3,  # noqa: E731
                              init={"perturbation": 0.3})
    a, b = solve(make()), solve(make())
    assert np.array_equal(a.x, b.x) and a.iterations == b.iterations


def test_report_serializable():
    rep = solve(NlpProblem(quadratic(1.0), convexity_constraints(8), x0=np.full(8, 2.0)))
    json.dumps(rep.to_dict())


def test_max_iter_returns_best_point():
    n = 64
    C = convexity_constraints(n) + constant_width(n, 1.0) + centering_constraints(n)
    rep = solve(NlpProblem(lambda x: F.area_functional(x, check=False), C, max_iter=3,
                           init={"perturbation": 0.3}))
    assert not rep.success and rep.status == "max_iter"
    assert C.max_violation(rep.x) < 1e-9 and C.slack(rep.x).min() > 0


def test_objective_errors_propagate():
    def broken(x):
        raise RuntimeError("boom")

    with pytest.raises(Exception) as exc:
        solve(NlpProblem(broken, convexity_constraints(8), x0=np.ones(8)))
    assert "boom" in str(exc.value) or "boom" in str(exc.value.__cause__)


def test_initialize_defaults():
    assert np.allclose(initialize(convexity_constraints(16) + constant_width(16, 1.0)), 0.5)
    C = inclusion_constraints(Shape("disk", radius=2.0), Shape("disk", radius=1.0), 16)
    assert np.allclose(initialize(convexity_constraints(16) + C), 1.5)


def test_initialize_perturbation_strict():
    C = convexity_constraints(60) + width_constraints(60, 1.0, 1.4)
    x = initialize(C, perturbation=0.3, seed=5)
    assert C.slack(x).min() > 0
    assert np.ptp(x) > 0


def test_initialize_reports_contradiction():
    C = convexity_constraints(16) + width_constraints(16, 2.0, None) + width_constraints(16, None, 1.0)
    with pytest.raises(InfeasibleStart) as exc:
        initialize(C)
    assert any("width" in f for f in exc.value.families)


def test_solve_rejects_infeasible_start():
    with pytest.raises(InfeasibleStart):
        solve(NlpProblem(quadratic(1.0), convexity_constraints(8), x0=np.r_[np.ones(7), 5.0]))
