"""Linearized Crank-Nicolson time stepping.

The first step is a predictor-corrector pair: a solve with the coefficient
frozen at a(U_0) followed by exactly one corrected solve with the
coefficient at the predicted midpoint. Every later step evaluates the
coefficient at the extrapolation (3/2) U_{n-1} - (1/2) U_{n-2}, so each
step is one linear SPD solve with system matrix M/delta + (a/2) K.

At extinction (zero field with a negative exponent) the coefficient is
undefined; the trajectory is frozen at zero from that step on, matching
the continuation of the exact extinct solutions.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .assembly import (FieldVector, LoadAssembler, SparseSymMatrix,
                       assemble_mass, assemble_stiffness, interpolate)
from .coefficient import (DegenerateCoefficientError, GuardStatus,
                          NonlocalCoefficient, check_guards,
                          evaluate_from_norm_sq)
from .linalg import (CG, DIRECT_BANDED, SolverConfig, SolverConvergenceError,
                     cg_jacobi, solve_banded_spd, to_banded_upper)
from .mesh import LagrangeSpace

logger = logging.getLogger(__name__)

WARN = "warn"
ABORT = "abort"


class SteppingError(RuntimeError):
    """A step failed; the message carries the step index and time."""


class GuardTripError(RuntimeError):
    """A guard trip occurred under the abort policy."""

    def __init__(self, step_index, t, status, value):
        super().__init__(f"guard {status.value} at step {step_index} "
                         f"(t={t:g}): coefficient {value:g}")
        self.step_index = step_index
        self.t = t
        self.status = status
        self.value = value


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, t_end] into n_steps steps of size delta."""

    t_end: float
    n_steps: int

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be at least 1, got {self.n_steps}")

    @property
    def delta(self) -> float:
        return self.t_end / self.n_steps

    def time(self, n: int) -> float:
        return n * self.delta

    def nearest_index(self, t: float) -> int:
        return min(max(int(round(t / self.delta)), 0), self.n_steps)


@dataclass
class StepState:
    """Rolling solver state: the two most recent fields plus run histories."""

    U_prev: FieldVector
    U_prev2: FieldVector | None
    t: float
    step_index: int
    coefficient_history: list = field(default_factory=list)
    energy_history: list = field(default_factory=list)
    frozen: bool = False


@dataclass
class TrajectorySummary:
    """Outcome of a full run."""

    state: StepState
    grid: TimeGrid
    final: FieldVector
    energy_history: list
    coefficient_history: list
    snapshots: dict
    first_guard_trip: tuple | None
    solver_method: str


class StepWorkspace:
    """Cached reduced matrices, banded forms, and matvec reuse for one run."""

    def __init__(self, space: LagrangeSpace, M: SparseSymMatrix,
                 K: SparseSymMatrix, grid: TimeGrid, forcing=None,
                 solver_config: SolverConfig | None = None,
                 guard_policy: str = WARN):
        if guard_policy not in (WARN, ABORT):
            raise ValueError(f"unknown guard policy {guard_policy!r}")
        self.space = space
        self.grid = grid
        self.guard_policy = guard_policy
        self.solver_config = solver_config or SolverConfig()
        self.free = space.free_node_indices
        self.M_ff = M.restrict(self.free)
        self.K_ff = K.restrict(self.free)
        self.use_banded = (self.solver_config.method == DIRECT_BANDED
                           and space.mesh.dim == 1)
        if self.solver_config.method == DIRECT_BANDED and space.mesh.dim != 1:
            raise ValueError("direct-banded is only valid for 1D node orderings")
        if self.use_banded:
            Mb = to_banded_upper(self.M_ff)
            Kb = to_banded_upper(self.K_ff)
            rows = max(Mb.shape[0], Kb.shape[0])
            self.Mb = self._pad(Mb, rows)
            self.Kb = self._pad(Kb, rows)
        self.load = None if forcing is None else LoadAssembler(space)
        self.forcing = forcing
        self._m_scale = abs(self.M_ff.data).max() if self.M_ff.nnz else 0.0
        self._k_scale = abs(self.K_ff.data).max() if self.K_ff.nnz else 0.0
        # matvec caches for the extrapolated coefficient and the next rhs
        self.mu_prev = None    # M_ff @ U_{n-1}
        self.mu_prev2 = None   # M_ff @ U_{n-2}
        self.ku_prev = None    # K_ff @ U_{n-1}

    @staticmethod
    def _pad(ab, rows):
        if ab.shape[0] == rows:
            return ab
        out = np.zeros((rows, ab.shape[1]))
        out[rows - ab.shape[0]:] = ab
        return out

    def load_vector(self, t_mid):
        if self.load is None:
            return None
        return self.load(self.forcing, t_mid).coefficients[self.free]

    def step_rhs(self, a_star, F):
        rhs = self.mu_prev / self.grid.delta - (0.5 * a_star) * self.ku_prev
        if F is not None:
            rhs = rhs + F
        return rhs

    def _solve_once(self, a_star, rhs):
        delta = self.grid.delta
        if self.use_banded:
            ab = self.Mb / delta + (0.5 * a_star) * self.Kb
            return solve_banded_spd(ab, rhs)
        A = self.M_ff.multiply(1.0 / delta) + self.K_ff.multiply(0.5 * a_star)
        x, _ = cg_jacobi(A.tocsr(), rhs, self.solver_config.tolerance,
                         self.solver_config.max_iterations)
        return x

    def solve_verified(self, a_star, rhs):
        """Solve (M/delta + (a/2) K) x = rhs and verify the residual against
        an independently recomputed matvec; returns (x, M x, K x).

        A direct solve gets one iterative-refinement pass if needed. The
        acceptance bound never goes below the backward-stable scale
        ||A||_max ||x|| eps attainable in double precision.
        """
        if len(rhs) == 0:
            return rhs.copy(), rhs.copy(), rhs.copy()
        x = self._solve_once(a_star, rhs)
        delta = self.grid.delta
        tol = self.solver_config.tolerance
        for attempt in range(2):
            mu_x = self.M_ff @ x
            ku_x = self.K_ff @ x
            res = np.linalg.norm(mu_x / delta + (0.5 * a_star) * ku_x - rhs)
            bound = tol * max(np.linalg.norm(rhs), 1e-300)
            scale = self._m_scale / delta + 0.5 * a_star * self._k_scale
            floor = 64.0 * np.finfo(float).eps * scale * np.linalg.norm(x)
            if res <= max(bound, floor):
                return x, mu_x, ku_x
            if attempt == 0 and self.use_banded:
                x = x + self._solve_once(
                    a_star, rhs - (mu_x / delta + (0.5 * a_star) * ku_x))
            else:
                break
        raise SolverConvergenceError(
            f"verified residual {res:.3e} above tolerance {bound:.3e}")


def init(space: LagrangeSpace, u0) -> StepState:
    """Initial state U_0 = I_h u0 at t = 0."""
    U0 = interpolate(space, u0)
    return StepState(U_prev=U0, U_prev2=None, t=0.0, step_index=0)


def _coefficient(coeff, s):
    """Coefficient value and guard status from a squared norm; an undefined
    value (extinction with a negative exponent) maps to the degenerate status."""
    try:
        a = evaluate_from_norm_sq(coeff, s)
    except DegenerateCoefficientError:
        return math.inf, GuardStatus.DEGENERATE
    return a, check_guards(a, coeff)


def _record(state, work, step_index, t, a_value, status):
    if status != GuardStatus.OK:
        if work.guard_policy == ABORT:
            raise GuardTripError(step_index, t, status, a_value)
        if not state.coefficient_history \
                or state.coefficient_history[-1][2] != status:
            logger.warning("guard %s at t=%g (coefficient %.3e)",
                           status.value, t, a_value)
    state.coefficient_history.append((t, a_value, status))


def _ensure_caches(state, work):
    if work.mu_prev is None:
        u = state.U_prev.coefficients[work.free]
        work.mu_prev = work.M_ff @ u
        work.ku_prev = work.K_ff @ u
    if state.U_prev2 is not None and work.mu_prev2 is None:
        work.mu_prev2 = work.M_ff @ state.U_prev2.coefficients[work.free]


def _accept(state, work, u_new, mu_new, ku_new, t_new):
    U_new = FieldVector(_embed(u_new, work), state.U_prev.space)
    state.U_prev2 = state.U_prev
    state.U_prev = U_new
    state.t = t_new
    state.step_index += 1
    state.energy_history.append((t_new, float(u_new @ mu_new)))
    work.mu_prev2, work.mu_prev = work.mu_prev, mu_new
    work.ku_prev = ku_new


def _freeze_step(state, work, t_new):
    n_free = len(work.free)
    _accept(state, work, np.zeros(n_free), np.zeros(n_free),
            np.zeros(n_free), t_new)
    state.frozen = True


def _embed(u_free, work):
    full = np.zeros(work.space.n_nodes)
    full[work.free] = u_free
    return full


def first_step(state: StepState, M: SparseSymMatrix, K: SparseSymMatrix,
               coeff: NonlocalCoefficient, f, grid: TimeGrid,
               solver_config: SolverConfig | None = None,
               guard_policy: str = WARN) -> StepState:
    """Predictor-corrector first step producing U_1 (public entry point)."""
    work = StepWorkspace(state.U_prev.space, M, K, grid, forcing=f,
                         solver_config=solver_config, guard_policy=guard_policy)
    return _first_step_impl(state, work, coeff)


def step(state: StepState, M: SparseSymMatrix, K: SparseSymMatrix,
         coeff: NonlocalCoefficient, f, grid: TimeGrid,
         solver_config: SolverConfig | None = None,
         guard_policy: str = WARN) -> StepState:
    """One multistep advance producing U_n, n >= 2 (public entry point)."""
    work = StepWorkspace(state.U_prev.space, M, K, grid, forcing=f,
                         solver_config=solver_config, guard_policy=guard_policy)
    return _step_impl(state, work, coeff)


def _first_step_impl(state, work, coeff):
    if state.step_index != 0:
        raise SteppingError(
            f"first step requires step_index 0, got {state.step_index}")
    delta = work.grid.delta
    _ensure_caches(state, work)
    u0 = state.U_prev.coefficients[work.free]
    if not state.energy_history:
        state.energy_history.append((0.0, float(u0 @ work.mu_prev)))
    t1 = work.grid.time(1)

    s0 = float(u0 @ work.mu_prev)
    a0, status0 = _coefficient(coeff, s0)
    if status0 == GuardStatus.DEGENERATE:
        _record(state, work, 1, t1, a0, status0)
        _freeze_step(state, work, t1)
        return state
    if status0 != GuardStatus.OK and work.guard_policy == ABORT:
        raise GuardTripError(1, t1, status0, a0)

    try:
        F = work.load_vector(0.5 * delta)
        # predictor: coefficient frozen at a(U_0)
        u10 = work._solve_once(a0, work.step_rhs(a0, F))
    except Exception as exc:
        raise SteppingError(f"step 1 at t={t1:g}: {exc}") from exc

    # corrector: coefficient at the predicted midpoint, applied exactly once
    uhalf = 0.5 * (u10 + u0)
    s_half = float(uhalf @ (work.M_ff @ uhalf))
    a_half, status_half = _coefficient(coeff, s_half)
    if status_half == GuardStatus.DEGENERATE:
        _record(state, work, 1, t1, a_half, status_half)
        _freeze_step(state, work, t1)
        return state
    _record(state, work, 1, t1, a_half, status_half)
    try:
        u1, mu1, ku1 = work.solve_verified(a_half, work.step_rhs(a_half, F))
    except Exception as exc:
        raise SteppingError(f"step 1 at t={t1:g}: {exc}") from exc

    _accept(state, work, u1, mu1, ku1, t1)
    return state


def _step_impl(state, work, coeff):
    if state.step_index < 1 or state.U_prev2 is None:
        raise SteppingError("multistep advance requires a completed first step")
    delta = work.grid.delta
    n = state.step_index + 1
    t_n = work.grid.time(n)
    if state.frozen:
        _record(state, work, n, t_n, math.inf, GuardStatus.DEGENERATE)
        _freeze_step(state, work, t_n)
        return state
    _ensure_caches(state, work)
    u_prev = state.U_prev.coefficients[work.free]
    u_prev2 = state.U_prev2.coefficients[work.free]

    ubar = 1.5 * u_prev - 0.5 * u_prev2
    s_bar = float(ubar @ (1.5 * work.mu_prev - 0.5 * work.mu_prev2))
    a_star, status = _coefficient(coeff, s_bar)
    if status == GuardStatus.DEGENERATE:
        _record(state, work, n, t_n, a_star, status)
        _freeze_step(state, work, t_n)
        return state
    _record(state, work, n, t_n, a_star, status)

    try:
        F = work.load_vector(t_n - 0.5 * delta)
        u_new, mu_new, ku_new = work.solve_verified(
            a_star, work.step_rhs(a_star, F))
    except Exception as exc:
        raise SteppingError(f"step {n} at t={t_n:g}: {exc}") from exc

    _accept(state, work, u_new, mu_new, ku_new, t_n)
    return state


def run(space: LagrangeSpace, u0, f, coeff: NonlocalCoefficient, grid: TimeGrid,
        solver_config: SolverConfig | None = None, guard_policy: str = WARN,
        snapshot_times=(), observer=None) -> TrajectorySummary:
    """Full trajectory: init, predictor-corrector, then multistep to t_end.

    f may be None for an unforced problem. Snapshot times are matched to the
    nearest grid time. The observer, when given, is called once per step as
    observer(step_index, t, energy, a_value, guard_status).
    """
    if solver_config is None:
        method = DIRECT_BANDED if space.mesh.dim == 1 else CG
        solver_config = SolverConfig(method=method)
    M = assemble_mass(space)
    K = assemble_stiffness(space)
    work = StepWorkspace(space, M, K, grid, forcing=f,
                         solver_config=solver_config, guard_policy=guard_policy)
    state = init(space, u0)
    _ensure_caches(state, work)
    state.energy_history.append(
        (0.0, float(state.U_prev.coefficients[work.free] @ work.mu_prev)))

    snap_indices = {}
    for t_req in snapshot_times:
        snap_indices.setdefault(grid.nearest_index(t_req), []).append(t_req)
    snapshots = {}
    for t_req in snap_indices.get(0, []):
        snapshots[t_req] = (0.0, state.U_prev.copy())

    first_trip = None
    for n in range(1, grid.n_steps + 1):
        if n == 1:
            _first_step_impl(state, work, coeff)
        else:
            _step_impl(state, work, coeff)
        t, a_val, status = state.coefficient_history[-1]
        if status != GuardStatus.OK and first_trip is None:
            first_trip = (n, t, status)
        if observer is not None:
            observer(n, t, state.energy_history[-1][1], a_val, status)
        for t_req in snap_indices.get(n, []):
            snapshots[t_req] = (t, state.U_prev.copy())

    return TrajectorySummary(state=state, grid=grid, final=state.U_prev,
                             energy_history=state.energy_history,
                             coefficient_history=state.coefficient_history,
                             snapshots=snapshots, first_guard_trip=first_trip,
                             solver_method=solver_config.method)
