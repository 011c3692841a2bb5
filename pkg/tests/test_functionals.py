import numpy as np
import pytest
from scipy.special import jn_zeros

from convexshape import functionals as F
from convexshape.oracle import fd_gradient, random_support_vector, relative_gradient_error
from convexshape.shapes import Shape
from convexshape.support import constant_width, grid

J01_SQ = jn_zeros(0, 1)[0] ** 2


def feasible_points(n, count=5, seed=7):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        p = random_support_vector(n, rng, rho_range=(0.5, 2.0))
        out.append(p / p.mean())
    return out


GEOMETRIC = {
    "area": lambda x: F.area_functional(x),
    "perimeter": lambda x: F.perimeter_functional(x),
    "area_perimeter": lambda x: F.area_perimeter_tradeoff(x, 0.5),
    "mahler": F.mahler_functional,
    "gauge_area": F.gauge_area_functional,
    "quadratic": F.make_functional("quadratic", 20, target=0.9),
}


@pytest.mark.parametrize("name", sorted(GEOMETRIC))
def test_geometric_gradients_match_fd(name):
    fn = GEOMETRIC[name]
    for x in feasible_points(20):
        assert relative_gradient_error(fn(x)[1], fd_gradient(fn, x, 1e-6)) <= 1e-8


def test_disk_area_and_symmetric_gradient():
    a, g = F.area_functional(np.ones(360))
    assert a == pytest.approx(np.pi, rel=1e-3)
    assert np.allclose(g, g[0])


@pytest.mark.parametrize("mode", ["density", "curvature"])
def test_area_gradient_modes_close_to_exact(mode):
    errs = []
    for n in (40, 80, 160):
        th = grid(n)
        p = np.sqrt(2.0 * np.cos(th) ** 2 + 0.5 * np.sin(th) ** 2)
        exact = F.area_functional(p)[1]
        errs.append(relative_gradient_error(F.area_functional(p, mode=mode)[1], exact))
    assert errs[-1] < 0.05
    assert errs[-1] < errs[0]


def test_curvature_raw_is_unscaled():
    p = 1 + 0.1 * np.cos(2 * grid(30))
    assert np.allclose(F.area_functional(p, "curvature_raw")[1] * 2 * np.pi / 30,
                       F.area_functional(p, "curvature")[1])


def test_barbier_on_constant_width_points(rng):
    n = 120
    C = constant_width(n, 1.0)
    R = Shape("reuleaux", width=1.0).support(grid(n))
    for t in np.linspace(0, 1, 5):
        x = (1 - t) * R + t * 0.5
        assert np.abs(C.residual(x)).max() < 1e-12
        assert F.perimeter_functional(x)[0] == pytest.approx(np.pi, abs=5 * (2 * np.pi / n) ** 2)


def test_segment_perimeter_gradient_constant():
    n = 48
    v, g = F.perimeter_functional(1 + 0.1 * np.cos(3 * grid(n)), mode="segment")
    assert np.all(g == 2 * np.pi / n)
    sq = Shape("square", side=1.0).support(grid(n))
    assert F.perimeter_functional(sq, mode="segment")[0] == pytest.approx(4.0, rel=(2 * np.pi / n) ** 2)


def test_mahler_disk_and_positivity():
    assert F.mahler_functional(np.ones(720))[0] == pytest.approx(np.pi**2, rel=1e-4)
    with pytest.raises(ValueError):
        F.mahler_functional(np.r_[np.ones(9), -1.0])


def test_unknown_modes_rejected():
    with pytest.raises(ValueError):
        F.area_functional(np.ones(10), mode="nope")
    with pytest.raises(ValueError):
        F.perimeter_functional(np.ones(10), mode="nope")
    with pytest.raises(ValueError):
        F.make_functional("volume", 10)


def test_maximize_flips_sign():
    f = F.make_functional("area", 16, maximize=True)
    v, g = f(np.ones(16))
    assert v == pytest.approx(-F.area_functional(np.ones(16))[0])
    assert f.raw(np.ones(16)) == pytest.approx(-v)


SETTINGS = F.FEMSettings(level=3)


@pytest.mark.parametrize("name,fn", [
    ("eig1_support_area", lambda x: F.eigenvalue_functional(x, 1, "times_area", "support", SETTINGS)),
    ("eig3_support_raw", lambda x: F.eigenvalue_functional(x, 3, "raw", "support", SETTINGS)),
    ("eig2_gauge", lambda x: F.eigenvalue_functional(x, 2, "times_area", "gauge", SETTINGS)),
    ("pde_f2_support", lambda x: F.pde_integral_functional(0.7 * x, "f2", "support", SETTINGS)),
    ("pde_f1_gauge", lambda x: F.pde_integral_functional(x, "f1", "gauge", SETTINGS)),
])
def test_fem_gradients_match_fd(name, fn):
    chain = 0.7 if name == "pde_f2_support" else 1.0
    for x in feasible_points(16, count=2):
        g = chain * fn(x)[1]
        assert relative_gradient_error(g, fd_gradient(fn, x, 1e-4)) <= 1e-2


def test_boundary_gradient_mode_is_close_at_fine_level():
    x = feasible_points(24, count=1)[0]
    st = F.FEMSettings(level=5, gradient="boundary")
    g_b = F.eigenvalue_functional(x, 1, "raw", "support", st)[1]
    g_d = F.eigenvalue_functional(x, 1, "raw", "support", F.FEMSettings(level=5))[1]
    assert relative_gradient_error(g_b, g_d) < 3e-2


def test_disk_eigenvalue_and_sign():
    lam, g = F.eigenvalue_functional(np.ones(128), 1, "raw", "support", F.FEMSettings(level=4))
    assert lam == pytest.approx(J01_SQ, rel=1e-2)
    assert g.sum() < 0
    assert F.EIGEN_DERIVATIVE_SIGN == -1.0


def test_eigen_scaling_and_monotonicity():
    st = F.FEMSettings(level=3)
    x = feasible_points(24, count=1)[0]
    l1 = F.eigenvalue_functional(x, 2, "raw", "support", st)[0]
    l2 = F.eigenvalue_functional(1.5 * x, 2, "raw", "support", st)[0]
    assert l2 == pytest.approx(l1 / 1.5**2, rel=1e-10)
    small = F.eigenvalue_functional(np.full(64, 0.8), 1, "raw", "support", st)[0]
    big = F.eigenvalue_functional(np.full(64, 1.0), 1, "raw", "support", st)[0]
    assert small >= big


def test_pde_minus_one_on_disk():
    v, _ = F.pde_integral_functional(np.ones(256), "minus_one", "support", F.FEMSettings(level=5))
    assert v == pytest.approx(-np.pi / 8, rel=1e-2)


def test_bad_eigen_arguments():
    with pytest.raises(ValueError):
        F.eigenvalue_functional(np.ones(12), 0)
    with pytest.raises(ValueError):
        F.eigenvalue_functional(np.ones(12), 1, "sqrt", settings=SETTINGS)


def test_f2_disk_value_matches_finite_differences():
    # 5-point finite differences on the disk of radius 0.8, h = 0.005, give -0.035772
    v, _ = F.pde_integral_functional(np.full(240, 0.8), "f2", settings=F.FEMSettings(level=5))
    assert v == pytest.approx(-0.035772, rel=1e-2)


@pytest.mark.parametrize("p", [20.0, 1000.0])
def test_smoothed_eigenvalue_bounds_and_gradient(p):
    st = F.FEMSettings(level=3)
    x = feasible_points(24, count=1, seed=11)[0]
    plain = F.eigenvalue_functional(x, 4, "raw", "support", st)[0]
    fn = lambda y: F.eigenvalue_functional(y, 4, "raw", "support", st, smoothing=p)  # noqa: E731
    v, g = fn(x)
    assert plain <= v <= 4 ** (1 / p) * plain
    assert relative_gradient_error(g, fd_gradient(fn, x, 1e-5)) < 1e-5


def test_smoothing_on_double_eigenvalue_of_disk():
    # lambda_2 = lambda_3 on the disk: the smoothed value is ~ 2^(1/p) lambda_3, and its
    # gradient is a multiple of the dilation direction by symmetry
    st = F.FEMSettings(level=4)
    v3, _ = F.eigenvalue_functional(np.ones(64), 3, "raw", "support", st)
    v, g = F.eigenvalue_functional(np.ones(64), 3, "raw", "support", st, smoothing=200.0)
    assert v == pytest.approx(2 ** (1 / 200) * v3, rel=1e-4)
    assert np.ptp(g) < 1e-3 * np.abs(g).max()


def test_smoothing_rejects_bad_settings():
    with pytest.raises(ValueError):
        F.eigenvalue_functional(np.ones(24), 2, smoothing=0.5)
    with pytest.raises(ValueError):
        F.eigenvalue_functional(np.ones(24), 2, settings=F.FEMSettings(level=2, gradient="boundary"),
                                smoothing=10.0)
