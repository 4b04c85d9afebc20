"""Lagrange basis functions on the reference interval and triangle.

Each basis is represented by its monomial coefficients, obtained once by
inverting the Vandermonde matrix on the equally spaced reference nodes
(small and well conditioned for the supported degrees). Values and
gradients are then evaluated at arbitrary reference points.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .mesh import reference_node_multi_indices


def _monomial_exponents(dim, k):
    if dim == 1:
        return [(i,) for i in range(k + 1)]
    return [(i, j) for j in range(k + 1) for i in range(k + 1 - j)]


def _eval_monomials(exponents, points):
    """Monomial values at points, shape (n_monomials, n_points)."""
    pts = np.atleast_2d(points)
    out = np.ones((len(exponents), len(pts)))
    for m, exps in enumerate(exponents):
        for d, e in enumerate(exps):
            if e:
                out[m] *= pts[:, d] ** e
    return out


def _eval_monomial_derivs(exponents, points, axis):
    pts = np.atleast_2d(points)
    out = np.zeros((len(exponents), len(pts)))
    for m, exps in enumerate(exponents):
        e_ax = exps[axis]
        if e_ax == 0:
            continue
        term = np.full(len(pts), float(e_ax))
        for d, e in enumerate(exps):
            p = e - 1 if d == axis else e
            if p:
                term = term * pts[:, d] ** p
        out[m] = term
    return out


class ReferenceBasis:
    """Degree-k Lagrange basis on the reference element.

    Local node ordering matches mesh.reference_node_multi_indices, which is
    also the ordering of LagrangeSpace.element_dofs.
    """

    def __init__(self, dim: int, degree: int):
        if degree < 1:
            raise ValueError(f"invalid degree: need k >= 1, got {degree}")
        self.dim = dim
        self.degree = degree
        multi = reference_node_multi_indices(dim, degree)
        self.nodes = np.array(multi, dtype=float) / degree
        self._exponents = _monomial_exponents(dim, degree)
        vander = _eval_monomials(self._exponents, self.nodes)  # (n_mono, n_nodes)
        # column i of coeffs holds basis i in the monomial basis
        self._coeffs = np.linalg.solve(vander.T, np.eye(len(multi)))

    @property
    def n_local(self) -> int:
        return len(self.nodes)

    def eval(self, points) -> np.ndarray:
        """Basis values at reference points, shape (n_local, n_points)."""
        mono = _eval_monomials(self._exponents, points)
        return self._coeffs.T @ mono

    def eval_grad(self, points) -> np.ndarray:
        """Reference gradients at points, shape (n_local, n_points, dim)."""
        pts = np.atleast_2d(points)
        out = np.empty((self.n_local, len(pts), self.dim))
        for axis in range(self.dim):
            dmono = _eval_monomial_derivs(self._exponents, pts, axis)
            out[:, :, axis] = self._coeffs.T @ dmono
        return out


@lru_cache(maxsize=None)
def reference_basis(dim: int, degree: int) -> ReferenceBasis:
    return ReferenceBasis(dim, degree)
