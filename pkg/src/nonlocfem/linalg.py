"""Solvers for the symmetric positive definite systems of each time step.

Two methods: Jacobi-preconditioned conjugate gradients (any dimension) and
a banded Cholesky factorization (1D node orderings, where the matrices have
bandwidth k). Every accepted solution is verified against an independently
recomputed residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .assembly import FieldVector, SparseSymMatrix

CG = "conjugate-gradient"
DIRECT_BANDED = "direct-banded"


class NotSPDError(RuntimeError):
    """A CG search direction produced nonpositive curvature; the system is
    not positive definite, which signals a negative diffusion coefficient or
    a corrupted assembly."""


class SolverConvergenceError(RuntimeError):
    """The iteration budget was exhausted before reaching the tolerance."""


@dataclass
class SolverConfig:
    """Tolerance is a relative residual bound; max_iterations defaults to 10n."""

    tolerance: float = 1e-12
    max_iterations: int | None = None
    method: str = CG

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.method not in (CG, DIRECT_BANDED):
            raise ValueError(f"unknown method {self.method!r}")


def cg_jacobi(A: sp.csr_matrix, b: np.ndarray, tol: float,
              max_iterations: int | None = None) -> tuple[np.ndarray, int]:
    """Preconditioned CG on a reduced SPD system; returns (x, iterations)."""
    n = len(b)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0
    limit = 10 * n if max_iterations is None else max_iterations
    diag = A.diagonal()
    if np.any(diag <= 0.0):
        raise NotSPDError("matrix has a nonpositive diagonal entry")
    inv_diag = 1.0 / diag

    x = np.zeros(n)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    for it in range(1, limit + 1):
        Ap = A @ p
        curvature = p @ Ap
        if curvature <= 0.0:
            raise NotSPDError(
                f"nonpositive curvature {curvature:.3e} on iteration {it}")
        alpha = rz / curvature
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * bnorm:
            # recurrence says converged; accept only if the true residual agrees
            r_true = b - A @ x
            if np.linalg.norm(r_true) <= tol * bnorm:
                return x, it
            r = r_true
            z = inv_diag * r
            p = z.copy()
            rz = r @ z
            continue
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverConvergenceError(
        f"CG did not reach relative residual {tol:g} in {limit} iterations")


def to_banded_upper(A: sp.spmatrix) -> np.ndarray:
    """Upper banded storage (scipy solveh_banded layout) of a symmetric matrix."""
    coo = A.tocoo()
    if len(coo.row) == 0:
        return np.zeros((1, A.shape[0]))
    bw = int(np.max(np.abs(coo.row - coo.col)))
    n = A.shape[0]
    ab = np.zeros((bw + 1, n))
    mask = coo.row <= coo.col
    r, c, v = coo.row[mask], coo.col[mask], coo.data[mask]
    np.add.at(ab, (bw + r - c, c), v)
    return ab


def solve_banded_spd(ab: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cholesky solve in banded storage."""
    try:
        return scipy.linalg.solveh_banded(ab, b)
    except np.linalg.LinAlgError as exc:
        raise NotSPDError(f"banded Cholesky failed: {exc}") from exc


def _verified(A, b, x, tol):
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(b - A @ x)
    return res <= tol * max(bnorm, 1e-300), res


def solve_spd(A: SparseSymMatrix, b: FieldVector,
              config: SolverConfig | None = None) -> FieldVector:
    """Solve A x = b on the free nodes of b's space; boundary entries are 0.

    The returned solution always satisfies the verified relative residual
    bound ||A x - b|| <= tolerance * ||b|| on the reduced system.
    """
    config = config or SolverConfig()
    space = b.space
    free = space.free_node_indices
    A_ff = A.restrict(free)
    b_f = b.coefficients[free]

    if config.method == DIRECT_BANDED:
        if space.mesh.dim != 1:
            raise ValueError("direct-banded is only valid for 1D node orderings")
        x_f = solve_banded_spd(to_banded_upper(A_ff), b_f)
        ok, res = _verified(A_ff, b_f, x_f, config.tolerance)
        if not ok:
            # one round of iterative refinement, then give up loudly
            x_f = x_f + solve_banded_spd(to_banded_upper(A_ff), b_f - A_ff @ x_f)
            ok, res = _verified(A_ff, b_f, x_f, config.tolerance)
            if not ok:
                raise SolverConvergenceError(
                    f"banded solve residual {res:.3e} above tolerance")
    else:
        x_f, _ = cg_jacobi(A_ff, b_f, config.tolerance, config.max_iterations)
        ok, res = _verified(A_ff, b_f, x_f, config.tolerance)
        if not ok:
            raise SolverConvergenceError(
                f"CG residual verification failed: {res:.3e}")

    x = np.zeros(space.n_nodes)
    x[free] = x_f
    return FieldVector(x, space)
