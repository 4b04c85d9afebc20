import numpy as np
import pytest
from scipy.integrate import quad

from nonlocfem.assembly import (FieldVector, NonFiniteFieldError,
                                SingularSystemError, SparseSymMatrix,
                                assemble_load, assemble_mass,
                                assemble_stiffness, element_mass_matrix,
                                element_stiffness_matrix, evaluate_on_elements,
                                interpolate, l2_error, l2_norm_sq,
                                ritz_project)
from nonlocfem.mesh import (build_lagrange_space, uniform_interval_mesh,
                            uniform_square_mesh)


def _space_1d(n, k, a=0.0, b=1.0):
    return build_lagrange_space(uniform_interval_mesh(a, b, n), k)


# --- element-matrix oracles (symbolic integration of hat functions) ---

def test_element_mass_1d_k1():
    h = 0.73
    Me = element_mass_matrix(np.array([[0.0], [h]]), 1)
    expect = np.array([[h / 3, h / 6], [h / 6, h / 3]])
    assert np.max(np.abs(Me - expect)) <= 1e-14


def test_element_stiffness_1d_k1():
    h = 0.73
    Ke = element_stiffness_matrix(np.array([[0.0], [h]]), 1)
    expect = np.array([[1 / h, -1 / h], [-1 / h, 1 / h]])
    assert np.max(np.abs(Ke - expect)) <= 1e-14 / h


def test_element_mass_2d_p1():
    tri = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    Me = element_mass_matrix(tri, 1)
    area = 0.5
    expect = (area / 12.0) * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]])
    assert np.max(np.abs(Me - expect)) <= 1e-14
    # a sheared triangle scales by its area only (affine invariance)
    tri2 = np.array([[0.2, 0.1], [0.7, 0.3], [0.4, 0.9]])
    e1, e2 = tri2[1] - tri2[0], tri2[2] - tri2[0]
    area2 = 0.5 * abs(e1[0] * e2[1] - e1[1] * e2[0])
    Me2 = element_mass_matrix(tri2, 1)
    expect2 = (area2 / 12.0) * np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]])
    assert np.max(np.abs(Me2 - expect2)) <= 1e-14


# --- global mass matrix ---

def test_mass_total_is_domain_measure():
    for space, measure in [(_space_1d(7, 2), 1.0),
                           (build_lagrange_space(uniform_square_mesh(3), 2), 1.0)]:
        M = assemble_mass(space)
        assert abs(M.matrix.sum() - measure) <= 1e-12


def test_mass_row_sums_are_basis_integrals():
    space = _space_1d(5, 2)
    M = assemble_mass(space)
    ones = np.ones(space.n_nodes)
    row_sums = M @ ones
    integrals = assemble_load(space, lambda x, t: np.ones_like(x), 0.0)
    np.testing.assert_allclose(row_sums, integrals.coefficients, atol=1e-14)


def test_mass_spd_on_free_nodes():
    rng = np.random.default_rng(7)
    for space in (_space_1d(6, 3),
                  build_lagrange_space(uniform_square_mesh(3), 2)):
        M_ff = assemble_mass(space).restrict(space.free_node_indices)
        for _ in range(100):
            v = rng.standard_normal(space.n_free)
            if np.linalg.norm(v) == 0:
                continue
            assert v @ (M_ff @ v) > 0.0


def test_matrices_symmetric():
    space = build_lagrange_space(uniform_square_mesh(4), 3)
    for A in (assemble_mass(space), assemble_stiffness(space)):
        scale = abs(A.matrix).max()
        assert A.symmetry_defect() <= 1e-14 * scale


def test_symmetry_violation_rejected():
    import scipy.sparse as sp
    bad = sp.csr_matrix(np.array([[1.0, 2.0], [0.5, 1.0]]))
    with pytest.raises(ValueError):
        SparseSymMatrix(bad)


def test_sparsity_pattern_matches_node_adjacency():
    space = build_lagrange_space(uniform_square_mesh(2), 2)
    M = assemble_mass(space)
    adjacent = set()
    for dofs in space.element_dofs:
        for i in dofs:
            for j in dofs:
                adjacent.add((int(i), int(j)))
    coo = M.matrix.tocoo()
    assert all((int(i), int(j)) in adjacent
               for i, j in zip(coo.row, coo.col))


def test_field_vector_length_contract():
    space = _space_1d(4, 1)
    with pytest.raises(ValueError):
        FieldVector(np.zeros(space.n_nodes + 1), space)


# --- stiffness matrix ---

def test_stiffness_annihilates_constants():
    for space in (_space_1d(6, 3),
                  build_lagrange_space(uniform_square_mesh(3), 2)):
        K = assemble_stiffness(space)
        resid = np.abs(K @ np.ones(space.n_nodes)).max()
        assert resid <= 1e-12 * abs(K.matrix).max()


def test_stiffness_interior_diagonal_five_point():
    # P1 on the diagonally split uniform grid reduces to the 5-point stencil
    space = build_lagrange_space(uniform_square_mesh(2), 1)
    K = assemble_stiffness(space)
    inode = space.free_node_indices[0]
    assert K.toarray()[inode, inode] == pytest.approx(4.0, abs=1e-12)


# --- load vectors ---

def test_load_zero_forcing():
    space = _space_1d(6, 2)
    F = assemble_load(space, lambda x, t: np.zeros_like(x), 0.0)
    assert np.all(F.coefficients == 0.0)


def test_load_constant_forcing_hat_integrals():
    n = 8
    space = _space_1d(n, 1)
    h = 1.0 / n
    F = assemble_load(space, lambda x, t: np.ones_like(x), 0.0)
    expect = np.full(n + 1, h)
    expect[0] = expect[-1] = h / 2
    np.testing.assert_allclose(F.coefficients, expect, rtol=1e-13)


def test_load_against_adaptive_quadrature_oracle():
    # f = x^2/(t+1)^2 at t = 0, entries integral(f * phi_i) via scipy.quad
    n, k = 4, 2
    space = _space_1d(n, k)
    F = assemble_load(space, lambda x, t: x ** 2 / (t + 1.0) ** 2, 0.0)

    U = FieldVector(np.zeros(space.n_nodes), space)
    for i in range(space.n_nodes):
        coeffs = np.zeros(space.n_nodes)
        coeffs[i] = 1.0
        U_i = FieldVector(coeffs, space)

        def integrand(x):
            # evaluate phi_i by locating x's element and using the basis
            ref = np.clip((x * n) % 1.0, 0.0, 1.0)
            e = min(int(x * n), n - 1)
            ref = x * n - e
            from nonlocfem.basis import reference_basis
            vals = reference_basis(1, k).eval(np.array([[ref]]))
            dofs = space.element_dofs[e]
            return float(vals[:, 0] @ coeffs[dofs]) * x ** 2

        exact, _ = quad(integrand, 0.0, 1.0, limit=200)
        assert F.coefficients[i] == pytest.approx(exact, abs=1e-10)


def test_load_nonfinite_forcing_rejected():
    space = _space_1d(4, 1)
    with pytest.raises(NonFiniteFieldError):
        assemble_load(space, lambda x, t: np.full_like(x, np.inf), 0.0)


# --- interpolation ---

def test_interpolate_zero():
    space = _space_1d(5, 2)
    U = interpolate(space, lambda x: np.zeros_like(x))
    assert np.all(U.coefficients == 0.0)


def test_interpolate_nodal_values():
    space = _space_1d(4, 1)
    U = interpolate(space, lambda x: np.sin(np.pi * x))
    mid = np.flatnonzero(space.nodes[:, 0] == 0.5)[0]
    assert U.coefficients[mid] == pytest.approx(1.0, abs=0.0)
    assert U.coefficients[space.boundary_node_flags].max() == 0.0


def test_interpolate_reproduces_space_polynomials():
    # boundary-compatible quadratic: exactly representable for k = 2
    space = _space_1d(4, 2)
    U = interpolate(space, lambda x: x * (1 - x))
    assert l2_error(U, lambda x: x * (1 - x)) <= 1e-12


def test_interpolate_nonfinite_rejected():
    space = _space_1d(4, 1)
    with pytest.raises(NonFiniteFieldError):
        interpolate(space, lambda x: np.where(x > 0.4, np.nan, x))


def test_interpolation_error_rate():
    # L2 error contracts by 2^(k+1) under mesh halving, within 15%
    for k in (1, 2, 3):
        errors = []
        for n in (8, 16, 32):
            space = _space_1d(n, k)
            U = interpolate(space, lambda x: np.sin(np.pi * x))
            errors.append(l2_error(U, lambda x: np.sin(np.pi * x)))
        for e0, e1 in zip(errors, errors[1:]):
            assert e0 / e1 == pytest.approx(2.0 ** (k + 1), rel=0.15)


# --- Ritz projection ---

def test_ritz_identity_on_space():
    space = _space_1d(6, 2)
    U = interpolate(space, lambda x: x * (1 - x))
    P = ritz_project(space, lambda x: 1.0 - 2.0 * x)
    assert np.max(np.abs(P.coefficients - U.coefficients)) <= 1e-10


def test_ritz_h1_rate_first_order():
    # H1 seminorm error via the energy identity |u|_1^2 - |P u|_1^2
    errs = []
    for n in (8, 16, 32):
        space = _space_1d(n, 1)
        P = ritz_project(space, lambda x: np.pi * np.cos(np.pi * x))
        K = assemble_stiffness(space)
        h1_exact_sq = np.pi ** 2 / 2.0
        h1_proj_sq = float(P.coefficients @ (K @ P.coefficients))
        errs.append(np.sqrt(max(h1_exact_sq - h1_proj_sq, 0.0)))
    for e0, e1 in zip(errs, errs[1:]):
        assert e0 / e1 == pytest.approx(2.0, rel=0.1)


def test_ritz_galerkin_orthogonality():
    space = _space_1d(8, 2)
    P = ritz_project(space, lambda x: np.pi * np.cos(np.pi * x))
    # residual of the projection equations on free nodes, quadrature-consistent
    K = assemble_stiffness(space)
    rhs = _ritz_rhs(space)
    resid = (K @ P.coefficients - rhs)[space.free_node_indices]
    assert np.max(np.abs(resid)) <= 1e-10


def _ritz_rhs(space):
    from nonlocfem.assembly import _geometry, _quad_points_physical
    from nonlocfem.basis import reference_basis
    from nonlocfem.quadrature import reference_rule
    rule = reference_rule(1, 2 * space.degree + 2)
    basis = reference_basis(1, space.degree)
    grads = basis.eval_grad(rule.points)
    _, _, det, JinvT = _geometry(space.mesh)
    pg = np.einsum("edc,iqc->eiqd", JinvT, grads)
    pts = _quad_points_physical(space.mesh, rule)
    gu = np.pi * np.cos(np.pi * pts[:, :, 0])
    wdet = det[:, None] * rule.weights[None, :]
    rhs_elem = np.einsum("eiqd,eq,eq->ei", pg, gu, wdet)
    rhs = np.zeros(space.n_nodes)
    np.add.at(rhs, space.element_dofs, rhs_elem)
    return rhs


def test_ritz_polynomial_exactness():
    space = _space_1d(5, 2)
    P = ritz_project(space, lambda x: 1.0 - 2.0 * x)
    assert l2_error(P, lambda x: x * (1 - x)) <= 1e-12


def test_ritz_singular_when_no_free_nodes():
    space = build_lagrange_space(uniform_square_mesh(1), 1)
    with pytest.raises(SingularSystemError):
        ritz_project(space, lambda x, y: (np.ones_like(x), np.ones_like(y)))


# --- norms ---

def test_l2_norm_sq_zero():
    space = _space_1d(5, 1)
    M = assemble_mass(space)
    assert l2_norm_sq(FieldVector(np.zeros(space.n_nodes), space), M) == 0.0


def test_l2_norm_sq_sin():
    space = _space_1d(64, 2)
    M = assemble_mass(space)
    U = interpolate(space, lambda x: np.sin(np.pi * x))
    assert l2_norm_sq(U, M) == pytest.approx(0.5, abs=1e-8)


def test_l2_norm_sq_matches_quadrature_oracle():
    space = _space_1d(3, 2)
    M = assemble_mass(space)
    rng = np.random.default_rng(3)
    coeffs = rng.standard_normal(space.n_nodes)
    coeffs[space.boundary_node_flags] = 0.0
    U = FieldVector(coeffs, space)
    # direct quadrature of (sum c_j phi_j)^2 on a high-order rule
    from nonlocfem.quadrature import reference_rule
    rule = reference_rule(1, 10)
    phys, vals = evaluate_on_elements(U, rule.points)
    h = 1.0 / 3.0
    direct = float(np.sum(h * rule.weights[None, :] * vals ** 2))
    assert l2_norm_sq(U, M) == pytest.approx(direct, rel=1e-12)


def test_l2_norm_dimension_mismatch():
    space = _space_1d(5, 1)
    M = assemble_mass(space)
    other = FieldVector(np.zeros(11), _space_1d(5, 2))
    with pytest.raises(ValueError):
        l2_norm_sq(other, M)


def test_l2_error_self_is_zero():
    space = _space_1d(6, 2)
    U = interpolate(space, lambda x: x * (1 - x))
    assert l2_error(U, lambda x: x * (1 - x)) <= 1e-12


def test_l2_error_zero_field_against_sin():
    space = _space_1d(50, 2)
    U = FieldVector(np.zeros(space.n_nodes), space)
    assert l2_error(U, lambda x: np.sin(np.pi * x)) == pytest.approx(
        1.0 / np.sqrt(2.0), abs=1e-8)


def test_l2_error_accepts_time_argument():
    space = _space_1d(6, 1)
    U = FieldVector(np.zeros(space.n_nodes), space)
    err = l2_error(U, lambda x, t: np.full_like(x, t), 2.0)
    assert err == pytest.approx(2.0, rel=1e-12)
