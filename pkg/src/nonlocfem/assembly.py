"""Assembly of mass/stiffness matrices, load vectors, and discrete norms.

All forms are integrated with reference-element quadrature mapped through
the affine element transforms. The default assembly rule has degree 2k+2;
error norms use a rule two degrees higher (capped at the largest available
symmetric triangle rule in 2D) so measured convergence rates reflect the
discretization, not the integrator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import reference_basis
from .mesh import LagrangeSpace, SimplicialMesh
from .quadrature import MAX_TRIANGLE_DEGREE, reference_rule

SYMMETRY_RTOL = 1e-14


class NonFiniteFieldError(ValueError):
    """A scalar field returned NaN or infinity where a finite value is required."""


class SingularSystemError(ValueError):
    """A projection system has no unknowns (every node is a boundary node)."""


@dataclass
class FieldVector:
    """Coefficient vector of a discrete function over a Lagrange space."""

    coefficients: np.ndarray
    space: LagrangeSpace

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.n_nodes,):
            raise ValueError(
                f"coefficient length {self.coefficients.shape} does not match "
                f"space with {self.space.n_nodes} nodes")

    def copy(self) -> "FieldVector":
        return FieldVector(self.coefficients.copy(), self.space)


class SparseSymMatrix:
    """Symmetric sparse matrix assembled over the nodes of a space."""

    def __init__(self, matrix: sp.csr_matrix):
        matrix = matrix.tocsr()
        scale = abs(matrix).max() if matrix.nnz else 0.0
        defect = abs(matrix - matrix.T).max() if matrix.nnz else 0.0
        if defect > SYMMETRY_RTOL * max(scale, 1e-300):
            raise ValueError(f"matrix is not symmetric: defect {defect:.3e} "
                             f"vs scale {scale:.3e}")
        self.matrix = matrix

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def __matmul__(self, other):
        if isinstance(other, FieldVector):
            return self.matrix @ other.coefficients
        return self.matrix @ other

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def restrict(self, indices) -> sp.csr_matrix:
        """Submatrix on the given node indices (row/column elimination)."""
        return self.matrix[indices][:, indices].tocsr()

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()

    def symmetry_defect(self) -> float:
        if self.matrix.nnz == 0:
            return 0.0
        return float(abs(self.matrix - self.matrix.T).max())


def assembly_degree(k: int) -> int:
    """Default quadrature degree for assembled forms."""
    return 2 * k + 2


def error_degree(dim: int, k: int) -> int:
    """Quadrature degree for error norms: two above assembly, table-capped in 2D."""
    deg = 2 * k + 4
    if dim == 2:
        deg = min(deg, MAX_TRIANGLE_DEGREE)
    return deg


def _geometry(mesh: SimplicialMesh):
    """Affine transform data per element: J, |det J|, J^{-T}."""
    verts = mesh.element_vertices()
    if mesh.dim == 1:
        J = (verts[:, 1, 0] - verts[:, 0, 0]).reshape(-1, 1, 1)
        det = J[:, 0, 0]
        JinvT = (1.0 / det).reshape(-1, 1, 1)
    else:
        e1 = verts[:, 1] - verts[:, 0]
        e2 = verts[:, 2] - verts[:, 0]
        J = np.stack([e1, e2], axis=-1)
        det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
        Jinv = np.empty_like(J)
        Jinv[:, 0, 0] = e2[:, 1]
        Jinv[:, 0, 1] = -e2[:, 0]
        Jinv[:, 1, 0] = -e1[:, 1]
        Jinv[:, 1, 1] = e1[:, 0]
        Jinv /= det[:, None, None]
        JinvT = np.transpose(Jinv, (0, 2, 1))
    return verts[:, 0], J, np.abs(det), JinvT


def _quad_points_physical(mesh, rule):
    """Quadrature point coordinates per element, shape (n_el, n_q, dim)."""
    v0, J, _, _ = _geometry(mesh)
    return v0[:, None, :] + np.einsum("eij,qj->eqi", J, rule.points)


def _scatter_symmetric(space, element_matrices):
    dofs = space.element_dofs
    rows = np.broadcast_to(dofs[:, :, None], element_matrices.shape)
    cols = np.broadcast_to(dofs[:, None, :], element_matrices.shape)
    n = space.n_nodes
    mat = sp.coo_matrix((element_matrices.ravel(),
                         (rows.ravel(), cols.ravel())), shape=(n, n))
    return SparseSymMatrix(mat.tocsr())


def element_mass_matrix(vertices, k: int) -> np.ndarray:
    """Mass matrix of a single element given its vertex coordinates."""
    verts = np.atleast_2d(np.asarray(vertices, dtype=float))
    dim = verts.shape[1] if verts.ndim == 2 and verts.shape[1] in (1, 2) else 1
    verts = verts.reshape(dim + 1, dim)
    basis = reference_basis(dim, k)
    rule = reference_rule(dim, assembly_degree(k))
    vals = basis.eval(rule.points)
    ref = np.einsum("iq,jq,q->ij", vals, vals, rule.weights)
    if dim == 1:
        det = abs(verts[1, 0] - verts[0, 0])
    else:
        e1, e2 = verts[1] - verts[0], verts[2] - verts[0]
        det = abs(e1[0] * e2[1] - e1[1] * e2[0])
    return det * ref


def element_stiffness_matrix(vertices, k: int) -> np.ndarray:
    """Stiffness matrix of a single element given its vertex coordinates."""
    verts = np.atleast_2d(np.asarray(vertices, dtype=float))
    dim = verts.shape[1] if verts.ndim == 2 and verts.shape[1] in (1, 2) else 1
    verts = verts.reshape(dim + 1, dim)
    basis = reference_basis(dim, k)
    rule = reference_rule(dim, assembly_degree(k))
    grads = basis.eval_grad(rule.points)
    if dim == 1:
        J = verts[1, 0] - verts[0, 0]
        det, JinvT = abs(J), np.array([[1.0 / J]])
    else:
        e1, e2 = verts[1] - verts[0], verts[2] - verts[0]
        d = e1[0] * e2[1] - e1[1] * e2[0]
        det = abs(d)
        JinvT = np.array([[e2[1], -e1[1]], [-e2[0], e1[0]]]) / d
    pg = np.einsum("dc,iqc->iqd", JinvT, grads)
    return det * np.einsum("iqd,jqd,q->ij", pg, pg, rule.weights)


def assemble_mass(space: LagrangeSpace, degree: int | None = None) -> SparseSymMatrix:
    """Global mass matrix M_ij = (phi_j, phi_i)."""
    k = space.degree
    rule = reference_rule(space.mesh.dim, assembly_degree(k) if degree is None else degree)
    basis = reference_basis(space.mesh.dim, k)
    vals = basis.eval(rule.points)
    ref = np.einsum("iq,jq,q->ij", vals, vals, rule.weights)
    _, _, det, _ = _geometry(space.mesh)
    return _scatter_symmetric(space, det[:, None, None] * ref)


def assemble_stiffness(space: LagrangeSpace, degree: int | None = None) -> SparseSymMatrix:
    """Global stiffness matrix K_ij = (grad phi_j, grad phi_i)."""
    k = space.degree
    rule = reference_rule(space.mesh.dim, assembly_degree(k) if degree is None else degree)
    basis = reference_basis(space.mesh.dim, k)
    grads = basis.eval_grad(rule.points)
    _, _, det, JinvT = _geometry(space.mesh)
    pg = np.einsum("edc,iqc->eiqd", JinvT, grads)
    elem = np.einsum("eiqd,ejqd,q->eij", pg, pg, rule.weights) * det[:, None, None]
    return _scatter_symmetric(space, elem)


def _evaluate_field(fn, coords, t=None):
    """Evaluate a scalar field at coordinate rows, vectorized when possible."""
    coords = np.atleast_2d(coords)
    args = tuple(coords[:, d] for d in range(coords.shape[1]))
    if t is not None:
        args = args + (t,)
    try:
        vals = np.asarray(fn(*args), dtype=float)
        vals = np.broadcast_to(vals, (len(coords),)).astype(float)
    except (TypeError, ValueError):
        vals = np.array([float(fn(*(c + ((t,) if t is not None else ())))
                               ) for c in map(tuple, coords)])
    return vals


class LoadAssembler:
    """Reusable load-vector assembler bound to one space and quadrature rule.

    Precomputes the scatter operator so repeated assemblies (one per time
    step) reduce to evaluating the forcing at the quadrature points and one
    sparse matrix-vector product.
    """

    def __init__(self, space: LagrangeSpace, degree: int | None = None):
        self.space = space
        k = space.degree
        self.rule = reference_rule(space.mesh.dim,
                                   assembly_degree(k) if degree is None else degree)
        basis = reference_basis(space.mesh.dim, k)
        vals = basis.eval(self.rule.points)          # (nl, nq)
        _, _, det, _ = _geometry(space.mesh)
        wdet = det[:, None] * self.rule.weights[None, :]   # (ne, nq)
        self.points = _quad_points_physical(space.mesh, self.rule)
        ne, nq, _ = self.points.shape
        nl = vals.shape[0]
        data = wdet[:, None, :] * vals[None, :, :]   # (ne, nl, nq)
        rows = np.broadcast_to(space.element_dofs[:, :, None], data.shape)
        cols = np.broadcast_to(
            (np.arange(ne)[:, None, None] * nq + np.arange(nq)[None, None, :]),
            data.shape)
        self._op = sp.coo_matrix(
            (data.ravel(), (rows.ravel(), cols.ravel())),
            shape=(space.n_nodes, ne * nq)).tocsr()
        self._flat_points = self.points.reshape(ne * nq, -1)

    def __call__(self, f, t) -> FieldVector:
        fvals = _evaluate_field(f, self._flat_points, t)
        if not np.all(np.isfinite(fvals)):
            raise NonFiniteFieldError(
                f"forcing returned a non-finite value at t={t}")
        return FieldVector(self._op @ fvals, self.space)


def assemble_load(space: LagrangeSpace, f, t, degree: int | None = None) -> FieldVector:
    """Load vector F_i = (f(., t), phi_i) by quadrature."""
    return LoadAssembler(space, degree)(f, t)


def interpolate(space: LagrangeSpace, u) -> FieldVector:
    """Nodal interpolant of u in the space, boundary coefficients forced to 0."""
    vals = _evaluate_field(u, space.nodes)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteFieldError("field returned a non-finite nodal value")
    vals = vals.copy()
    vals[space.boundary_node_flags] = 0.0
    return FieldVector(vals, space)


def ritz_project(space: LagrangeSpace, grad_u, quad_refinement: int = 0) -> FieldVector:
    """Elliptic projection: (grad W, grad phi_i) = (grad u, grad phi_i) for all i.

    grad_u is called with coordinate arrays and must return du/dx (1D) or a
    pair (du/dx, du/dy) (2D). Diagnostic operation; solved directly.
    """
    if space.n_free == 0:
        raise SingularSystemError("no interior nodes: projection system is empty")
    dim = space.mesh.dim
    k = space.degree
    deg = assembly_degree(k) + max(0, quad_refinement)
    if dim == 2:
        deg = min(deg, MAX_TRIANGLE_DEGREE)
    rule = reference_rule(dim, deg)
    basis = reference_basis(dim, k)
    grads = basis.eval_grad(rule.points)
    _, _, det, JinvT = _geometry(space.mesh)
    pg = np.einsum("edc,iqc->eiqd", JinvT, grads)
    pts = _quad_points_physical(space.mesh, rule)
    flat = pts.reshape(-1, dim)
    raw = grad_u(*(flat[:, d] for d in range(dim)))
    comps = [raw] if dim == 1 else list(raw)
    gu = np.stack([np.broadcast_to(np.asarray(g, dtype=float), (len(flat),))
                   for g in comps], axis=-1)
    gu = gu.reshape(pts.shape[0], pts.shape[1], dim)
    wdet = det[:, None] * rule.weights[None, :]
    rhs_elem = np.einsum("eiqd,eqd,eq->ei", pg, gu, wdet)
    rhs = np.zeros(space.n_nodes)
    np.add.at(rhs, space.element_dofs, rhs_elem)

    K = assemble_stiffness(space, degree=deg)
    free = space.free_node_indices
    x = np.zeros(space.n_nodes)
    x[free] = spla.spsolve(K.restrict(free).tocsc(), rhs[free])
    return FieldVector(x, space)


def l2_norm_sq(U: FieldVector, M: SparseSymMatrix) -> float:
    """Squared L2 norm of a discrete function: U^T M U."""
    if M.dimension != len(U.coefficients):
        raise ValueError(f"dimension mismatch: matrix {M.dimension}, "
                         f"vector {len(U.coefficients)}")
    return float(U.coefficients @ (M.matrix @ U.coefficients))


def l2_error(U: FieldVector, u_exact, t=None, degree: int | None = None) -> float:
    """L2 norm of U - u_exact(., t), integrated on the error quadrature rule."""
    space = U.space
    dim = space.mesh.dim
    rule = reference_rule(dim, error_degree(dim, space.degree) if degree is None
                          else degree)
    basis = reference_basis(dim, space.degree)
    vals = basis.eval(rule.points)
    _, _, det, _ = _geometry(space.mesh)
    pts = _quad_points_physical(space.mesh, rule)
    exact = _evaluate_field(u_exact, pts.reshape(-1, dim), t)
    if not np.all(np.isfinite(exact)):
        raise NonFiniteFieldError("exact solution returned a non-finite value")
    exact = exact.reshape(pts.shape[0], pts.shape[1])
    Uq = np.einsum("ei,iq->eq", U.coefficients[space.element_dofs], vals)
    wdet = det[:, None] * rule.weights[None, :]
    return float(np.sqrt(np.sum(wdet * (Uq - exact) ** 2)))


def evaluate_on_elements(U: FieldVector, ref_points) -> tuple[np.ndarray, np.ndarray]:
    """Values of U at given reference points of every element.

    Returns (physical coordinates, values), each indexed (element, point).
    Used for snapshots and plotting-style output.
    """
    space = U.space
    basis = reference_basis(space.mesh.dim, space.degree)
    pts = np.atleast_2d(ref_points)
    vals = basis.eval(pts)
    v0, J, _, _ = _geometry(space.mesh)
    phys = v0[:, None, :] + np.einsum("eij,qj->eqi", J, pts)
    Uq = np.einsum("ei,iq->eq", U.coefficients[space.element_dofs], vals)
    return phys, Uq
