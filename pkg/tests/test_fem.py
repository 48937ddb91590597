import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.sparse.linalg import splu, spsolve

from lamafield.errors import ValidationError
from lamafield.fem import (
    FemDiscretization,
    Mesh,
    assemble,
    build_mesh_1d,
    build_mesh_2d,
    fractional_apply,
    k_alpha_even,
    log_det_k_alpha,
    mesh_from_nodes_1d,
    observation_matrix,
    operator_matrix,
)


def test_build_mesh_1d_counts():
    mesh = build_mesh_1d(0.0, 5, 1.0)
    assert_allclose(mesh.nodes, [0, 1, 2, 3, 4])
    assert len(mesh.elements) == 4
    with pytest.raises(ValidationError):
        build_mesh_1d(0.0, 2, 1.0)
    with pytest.raises(ValidationError):
        build_mesh_1d(0.0, 5, -1.0)


def test_build_mesh_2d_counts_and_determinism():
    mesh = build_mesh_2d((0, 1, 0, 1), 3, 3)
    assert mesh.node_count == 9
    assert len(mesh.elements) == 8
    mesh2 = build_mesh_2d((0, 1, 0, 1), 3, 3)
    assert np.array_equal(mesh.nodes, mesh2.nodes)
    assert np.array_equal(mesh.elements, mesh2.elements)
    # row-major node order
    assert_allclose(mesh.nodes[1], [0.5, 0.0])
    assert_allclose(mesh.nodes[3], [0.0, 0.5])


def test_assembly_1d_stencils():
    h = 0.7
    fd = assemble(build_mesh_1d(0.0, 6, h))
    C = fd.C.toarray()
    G = fd.G.toarray()
    assert_allclose(C[2, 1:4], [h / 6, 2 * h / 3, h / 6], rtol=1e-14)
    assert_allclose(G[2, 1:4], [-1 / h, 2 / h, -1 / h], rtol=1e-14)
    want_a = np.full(6, h)
    want_a[[0, -1]] = h / 2
    assert_allclose(fd.a, want_a, rtol=1e-14)
    # partition of unity: row sums of C equal a
    assert_allclose(np.asarray(fd.C.sum(axis=1)).ravel(), fd.a, rtol=1e-14)


def test_invariants_all_meshes():
    meshes = [
        build_mesh_1d(0.0, 17, 0.3),
        mesh_from_nodes_1d(np.cumsum(np.random.default_rng(0).uniform(0.2, 1.0, 12))),
        build_mesh_2d((0, 2, 0, 1), 5, 4),
    ]
    for mesh in meshes:
        fd = assemble(mesh)
        n = fd.n
        assert np.abs(fd.G @ np.ones(n)).max() < 1e-12
        assert_allclose(fd.a.sum(), mesh.measure(), rtol=1e-12)
        assert np.all(fd.a > 0)
        assert (fd.C != fd.C.T).nnz == 0     # bit-for-bit symmetry
        assert (fd.G != fd.G.T).nnz == 0
        lam, _ = fd.eig
        assert lam.min() >= 0


def test_operator_matrix_properties():
    fd = assemble(build_mesh_1d(0.0, 9, 1.0))
    K = operator_matrix(fd, 1e6)
    ct = np.diag(fd.a)
    assert np.max(np.abs((K.toarray() - 1e12 * ct))) <= 1e-6 * 1e12 * fd.a.min()
    K1 = operator_matrix(fd, 1.3).toarray()
    assert_allclose(K1, K1.T, rtol=0)
    eigs = np.linalg.eigvalsh(K1)
    assert eigs.min() >= 1.3**2 * fd.a.min() - 1e-12
    with pytest.raises(ValidationError):
        operator_matrix(fd, 0.0)


def test_k_alpha_even_recursion():
    fd = assemble(build_mesh_1d(0.0, 12, 0.5))
    kappa = 1.7
    K = operator_matrix(fd, kappa).toarray()
    assert_allclose(k_alpha_even(fd, kappa, 2).toarray(), K, rtol=0)
    K4 = k_alpha_even(fd, kappa, 4).toarray()
    assert_allclose(K4, K4.T, rtol=1e-13)
    assert_allclose(K4, K @ np.diag(1 / fd.a) @ K, rtol=1e-13)
    with pytest.raises(ValidationError):
        k_alpha_even(fd, kappa, 3)

    # applying K4^{-1} equals two K-solves interleaved with Ct multiplication
    rng = np.random.default_rng(1)
    w = rng.standard_normal(12)
    direct = np.linalg.solve(K4, w)
    y = np.linalg.solve(K, w)
    two_step = np.linalg.solve(K, fd.a * y)
    assert_allclose(direct, two_step, rtol=1e-10)


def test_fractional_apply_matches_sparse_solve():
    fd = assemble(build_mesh_1d(0.0, 30, 0.4))
    kappa = 2.2
    rng = np.random.default_rng(2)
    w = rng.standard_normal(30)
    # alpha = 2: inverse application solves K v = Ct w
    v_spec = fractional_apply(fd, kappa, 2.0, w, "inverse")
    K = operator_matrix(fd, kappa)
    v_sparse = spsolve(K, fd.a * w)
    assert_allclose(v_spec, v_sparse, rtol=1e-8)
    # alpha = 4 equivalence with the even recursion
    v4_spec = fractional_apply(fd, kappa, 4.0, w, "inverse")
    v4_sparse = spsolve(k_alpha_even(fd, kappa, 4).tocsc(), fd.a * w)
    assert_allclose(v4_spec, v4_sparse, rtol=1e-8)
    # forward then inverse is the identity
    back = fractional_apply(fd, kappa, 3.1,
                            fractional_apply(fd, kappa, 3.1, w, "forward"),
                            "inverse")
    assert_allclose(back, w, rtol=1e-9)
    with pytest.raises(ValidationError):
        fractional_apply(fd, kappa, 0.3, w)


def _zero_stiffness_fd(n=8):
    """Mesh variant with G = 0, so K = kappa^2 * Ct exactly."""
    base = assemble(build_mesh_1d(0.0, n, 1.0))
    zero = base.G * 0.0
    return FemDiscretization(mesh=base.mesh, C=base.C, G=zero, a=base.a, phi=base.phi)


def test_fractional_apply_zero_stiffness_scaling():
    fd = _zero_stiffness_fd()
    kappa, alpha = 1.8, 3.0
    w = np.arange(1.0, 9.0)
    assert_allclose(fractional_apply(fd, kappa, alpha, w, "inverse"),
                    kappa ** (-alpha) * w, rtol=1e-12)
    assert_allclose(fractional_apply(fd, kappa, alpha, w, "forward"),
                    kappa ** alpha * w, rtol=1e-12)


def test_log_det_zero_stiffness_closed_form():
    fd = _zero_stiffness_fd()
    kappa, alpha = 2.5, 3.0
    want = alpha / 2.0 * fd.n * np.log(kappa**2)
    assert_allclose(log_det_k_alpha(fd, kappa, alpha, "eigen"), want, rtol=1e-12)


def test_log_det_monotone_and_dual_path():
    fd = assemble(build_mesh_1d(0.0, 50, 0.25))
    vals = [log_det_k_alpha(fd, k, 2.0, "eigen") for k in (0.5, 1.0, 2.0, 4.0)]
    assert np.all(np.diff(vals) > 0)
    for alpha in (2, 4, 6):
        e = log_det_k_alpha(fd, 1.0, alpha, "eigen")
        c = log_det_k_alpha(fd, 1.0, alpha, "cholesky")
        assert_allclose(e, c, rtol=1e-8)
    with pytest.raises(ValidationError):
        log_det_k_alpha(fd, 1.0, 2.5, "cholesky")


def test_spectral_recursive_agreement_random_meshes():
    rng = np.random.default_rng(9)
    for trial in range(3):
        n = int(rng.integers(20, 60))
        nodes = np.cumsum(rng.uniform(0.1, 0.6, n))
        fd = assemble(mesh_from_nodes_1d(nodes))
        kappa = float(rng.uniform(0.5, 3.0))
        w = rng.standard_normal(n)
        for alpha in (2, 4, 6):
            ka = k_alpha_even(fd, kappa, alpha)
            v_sparse = spsolve(ka.tocsc(), fd.a * w)
            v_spec = fractional_apply(fd, kappa, float(alpha), w, "inverse")
            assert_allclose(v_spec, v_sparse, rtol=1e-8)
            assert_allclose(
                log_det_k_alpha(fd, kappa, alpha, "eigen"),
                log_det_k_alpha(fd, kappa, alpha, "cholesky"),
                rtol=1e-8,
            )
    # 2-D case
    fd = assemble(build_mesh_2d((0, 1, 0, 1), 5, 5))
    w = np.random.default_rng(3).standard_normal(fd.n)
    v_sparse = spsolve(k_alpha_even(fd, 1.5, 4).tocsc(), fd.a * w)
    v_spec = fractional_apply(fd, 1.5, 4.0, w, "inverse")
    assert_allclose(v_spec, v_sparse, rtol=1e-8)


def test_observation_matrix_interpolates():
    mesh = build_mesh_1d(0.0, 5, 1.0)
    phi = observation_matrix(mesh, [0.0, 1.5, 3.25])
    assert_allclose(phi.toarray()[0], [1, 0, 0, 0, 0])
    assert_allclose(phi.toarray()[1], [0, 0.5, 0.5, 0, 0])
    assert_allclose(phi.toarray()[2], [0, 0, 0, 0.75, 0.25])
    with pytest.raises(ValidationError):
        observation_matrix(mesh, [-0.5])


def test_mesh_validation():
    with pytest.raises(ValidationError):
        Mesh(dimension=1, nodes=np.array([0.0, 0.0, 1.0]),
             elements=np.array([[0, 1], [1, 2]]))
    with pytest.raises(ValidationError):
        Mesh(dimension=2,
             nodes=np.array([[0, 0], [1, 0], [2, 0]], dtype=float),
             elements=np.array([[0, 1, 2]]))   # collinear: degenerate
