import numpy as np
import pytest
from scipy.special import jn_zeros

from convexshape import fem
from convexshape.functionals import SOURCES
from convexshape.geometry import GeometryError, polygon, polygon_area, polygon_centroid
from convexshape.support import SupportVector, vertices

J01_SQ = jn_zeros(0, 1)[0] ** 2


def square(side=1.0):
    return polygon(side * np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))


def disk(n=256, r=1.0):
    return vertices(SupportVector(np.full(n, r)))


def test_square_mesh_target_h():
    m = fem.mesh_polygon(square(), target_h=0.5)
    assert m.max_edge() <= 0.5
    b = m.nodes[m.boundary_nodes]
    on_side = np.isclose(b, 0).any(axis=1) | np.isclose(b, 1).any(axis=1)
    assert on_side.all()
    assert np.all(m.triangle_areas() > 0)


def test_refinement_quadruples():
    P = disk(24)
    counts = [len(fem.mesh_polygon(P, level=L).tris) for L in range(4)]
    assert counts[1:] == [4 * c for c in counts[:-1]]


@pytest.mark.parametrize("level", [0, 2, 4])
def test_mesh_area_partition(level):
    P = disk(60)
    m = fem.mesh_polygon(P, level=level)
    assert m.triangle_areas().sum() == pytest.approx(polygon_area(P), rel=1e-12)
    # boundary edges partition the boundary
    a, b = m.nodes[m.bedges[:, 0]], m.nodes[m.bedges[:, 1]]
    assert np.hypot(*(b - a).T).sum() == pytest.approx(P.edge_lengths().sum(), rel=1e-12)


def test_node_map_reproduces_nodes():
    P = vertices(SupportVector(1 + 0.1 * np.cos(3 * 2 * np.pi * np.arange(30) / 30)))
    m = fem.mesh_polygon(P, level=3)
    base = np.vstack([polygon_centroid(P), P.vertices])
    assert np.allclose(m.node_map @ base, m.nodes, atol=1e-14)


def test_degenerate_polygon_rejected():
    flat = polygon(np.array([[0, 0], [1, 0], [1, 1e-12], [0, 1e-12]], dtype=float))
    with pytest.raises(GeometryError):
        fem.mesh_polygon(flat, level=1)


def test_assembly_properties():
    K, M = fem.assemble(fem.mesh_polygon(disk(32), level=2))
    assert abs(K - K.T).max() < 1e-12 and abs(M - M.T).max() < 1e-14
    assert np.all(np.linalg.eigvalsh(M.toarray()) > 0)
    assert np.allclose(K @ np.ones(K.shape[0]), 0, atol=1e-12)


def test_poisson_unit_source_centre_value():
    P = disk(256)
    m = fem.mesh_polygon(P, level=6)
    u = fem.solve_poisson(m, 1.0)
    centre = np.argmin(np.hypot(*m.nodes.T))
    assert u.values[centre] == pytest.approx(0.25, abs=2e-3)
    assert np.all(u.values[m.boundary_nodes] == 0)


def test_poisson_zero_source():
    m = fem.mesh_polygon(disk(16), level=2)
    assert np.all(fem.solve_poisson(m, 0.0).values == 0)


def test_poisson_minus_one_integral():
    P = disk(512)
    vals = []
    for L in (5, 6):
        m = fem.mesh_polygon(P, level=L)
        K, M = fem.assemble(m)
        u = fem.solve_poisson(m, SOURCES["minus_one"], matrices=(K, M))
        vals.append(float(np.ones(len(m.nodes)) @ (M @ u.values)))
    assert fem.extrapolate(*vals) == pytest.approx(-np.pi / 8, rel=1e-3)


def test_f1_self_convergence():
    P = disk(128)
    vals = []
    for L in (3, 4, 5):
        m = fem.mesh_polygon(P, level=L)
        K, M = fem.assemble(m)
        vals.append(float(np.ones(len(m.nodes)) @ (M @ fem.solve_poisson(m, SOURCES["f1"], (K, M)).values)))
    e1, e2 = fem.extrapolate(vals[0], vals[1]), fem.extrapolate(vals[1], vals[2])
    assert abs(e1 - e2) < 0.1 * abs(vals[2] - vals[1]) + 1e-12
    assert abs(e2 - vals[2]) < abs(vals[2] - vals[1])


def test_square_eigenvalues_and_order():
    errs = []
    for L in (3, 4, 5):
        pairs = fem.eigs(fem.mesh_polygon(square(), level=L), 3)
        lam = [p[0] for p in pairs]
        assert lam == sorted(lam) and lam[0] > 0
        errs.append(abs(lam[0] - 2 * np.pi**2))
    assert lam[0] == pytest.approx(2 * np.pi**2, rel=5e-3)
    assert lam[1] == pytest.approx(5 * np.pi**2, rel=2e-2)
    slope = np.polyfit(np.log([2.0**-L for L in (3, 4, 5)]), np.log(errs), 1)[0]
    assert slope >= 1.9


def test_eigen_scaling():
    a = fem.eigs(fem.mesh_polygon(square(), level=3), 2)
    b = fem.eigs(fem.mesh_polygon(square(2.0), level=3), 2)
    for (la, _), (lb, _) in zip(a, b):
        assert lb == pytest.approx(la / 4, rel=1e-10)


def test_disk_eigenvalue_extrapolation_gain():
    P = disk(1024)
    v4, v5 = (fem.eigs(fem.mesh_polygon(P, level=L), 1)[0][0] for L in (4, 5))
    ex = fem.extrapolate(v4, v5)
    assert ex == pytest.approx(J01_SQ, rel=1e-3)
    assert abs(ex - J01_SQ) * 4 <= abs(v5 - J01_SQ)


def test_eigenfunctions_mass_normalized():
    m = fem.mesh_polygon(disk(40), level=3)
    K, M = fem.assemble(m)
    for lam, u in fem.eigs(m, 3, (K, M)):
        assert u.values @ (M @ u.values) == pytest.approx(1.0)
        assert u.values @ (K @ u.values) == pytest.approx(lam)


def test_eigs_rejects_bad_k():
    m = fem.mesh_polygon(disk(12), level=0)
    with pytest.raises(ValueError):
        fem.eigs(m, 0)
    with pytest.raises(fem.FEMError):
        fem.eigs(m, 5)


@pytest.mark.parametrize("a,b", [(1.0, 0.0), (0.3, -2.0)])
def test_linear_field_density(a, b):
    m = fem.mesh_polygon(disk(20), level=2)
    u = fem.DiscreteField(a * m.nodes[:, 0] + b * m.nodes[:, 1], np.zeros(len(m.nodes), bool))
    d = fem.boundary_gradient_density(m, u, method="element")
    assert np.allclose(d.value, a * a + b * b)


def edge_means(d):
    return np.bincount(d.edge, d.weight * d.value) / np.bincount(d.edge, d.weight)


def test_disk_eigenfunction_flux_uniform():
    P = disk(128)
    m = fem.mesh_polygon(P, level=5)
    lam, u = fem.eigs(m, 1)[0]
    d = fem.boundary_gradient_density(m, u, method="element")
    assert d.value.std() / d.value.mean() <= 0.05
    rd = fem.boundary_gradient_density(m, u, method="recovered")
    rec = edge_means(rd)
    assert rec.std() / rec.mean() <= 0.05
    # Rellich: int |d_n u|^2 x.n = 2 lambda for the normalized eigenfunction
    pts = rd.points(P)
    nrm = P.edge_normals()[rd.edge]
    assert np.sum(rd.weight * rd.value * (pts * nrm).sum(1)) == pytest.approx(2 * lam, rel=2e-2)


def test_poisson_boundary_flux():
    m = fem.mesh_polygon(disk(128), level=5)
    K, M = fem.assemble(m)
    u = fem.solve_poisson(m, 1.0, (K, M))
    assert np.allclose(fem._element_normal_derivative(m, u), -0.5, atol=2e-2)
    # the recovered flux is exact on average over each polygon edge
    flux = fem._recovered_normal_derivative(m, u, K).mean(axis=1)
    per_edge = np.bincount(m.btag, flux) / np.bincount(m.btag)
    assert np.allclose(per_edge, -0.5, atol=1e-3)
    # adjoint pairing with q = -u gives the positive product of fluxes
    q = fem.DiscreteField(-u.values, u.dirichlet, -u.load)
    dens = fem.boundary_gradient_density(m, u, q, method="element")
    assert np.allclose(dens.value, 0.25, atol=2e-2)


@pytest.mark.parametrize("coarse,fine,limit", [(1.0 + 1.0, 1.0 + 0.25, 1.0), (3.0, 3.0, 3.0)])
def test_extrapolate(coarse, fine, limit):
    assert fem.extrapolate(coarse, fine) == pytest.approx(limit)


def test_mesh_text_dump():
    m = fem.mesh_polygon(square(), level=1)
    lines = fem.mesh_to_text(m).splitlines()
    assert lines[0] == f"nodes {len(m.nodes)}"
    assert lines[len(m.nodes) + 1] == f"triangles {len(m.tris)}"


@pytest.mark.parametrize("which", ["eigen", "integral"])
def test_node_gradients_match_fd(which, rng):
    P = vertices(SupportVector(1 + 0.05 * np.cos(2 * 2 * np.pi * np.arange(12) / 12)))
    m = fem.mesh_polygon(P, level=2)

    def value(nodes):
        mm = fem.Mesh(nodes, m.tris, m.bedges, m.btag, m.bs, m.n_poly_edges, m.level)
        K, M = fem.assemble(mm)
        if which == "eigen":
            return fem.eigs(mm, 1, (K, M))[0][0]
        u = fem.solve_poisson(mm, SOURCES["f1"], (K, M))
        return float(np.ones(len(nodes)) @ (M @ u.values))

    K, M = fem.assemble(m)
    if which == "eigen":
        lam, u = fem.eigs(m, 1, (K, M))[0]
        g = fem.eigen_node_gradient(m, lam, u)
    else:
        u = fem.solve_poisson(m, SOURCES["f1"], (K, M))
        g = fem.integral_node_gradient(m, u, SOURCES["f1"])
    direction = rng.normal(size=m.nodes.shape)
    direction[m.boundary_nodes] = rng.normal(size=(len(m.boundary_nodes), 2))
    eps = 1e-6
    fd = (value(m.nodes + eps * direction) - value(m.nodes - eps * direction)) / (2 * eps)
    assert np.sum(g * direction) == pytest.approx(fd, rel=1e-6)
