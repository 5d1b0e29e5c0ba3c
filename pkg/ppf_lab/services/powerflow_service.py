"""
AC power flow (polar Newton–Raphson) and branch-flow recovery
=============================================================

Ordering convention used throughout: unknowns are
``[theta at PV buses; theta at PQ buses; V at PQ buses]`` and the mismatch
vector is ``[dP at PV buses; dP at PQ buses; dQ at PQ buses]``, each block
bus-index ascending. The mismatch is *specified minus calculated*.

All functions are pure; a case / admittance pair can be shared by any number
of concurrent solves.
"""
from __future__ import annotations

import logging
import warnings
from typing import Optional, Protocol, Tuple

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import MatrixRankWarning, spsolve

from ppf_lab.core.errors import ContractViolation, SolverError
from ppf_lab.models.network import AdmittanceMatrix, NetworkCase
from ppf_lab.models.settings import SolverOptions
from ppf_lab.models.states import BranchFlows, InjectionSample, PfSolution, PfState
from ppf_lab.services.case_service import build_ybus

logger = logging.getLogger(__name__)


# --------------------------------------------------------------------------- #
# Linear solve backends
# --------------------------------------------------------------------------- #
class LinearSolver(Protocol):
    def solve(self, a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        """Solve ``a @ x = rhs``; raise ``numpy.linalg.LinAlgError`` when singular."""
        ...


class DenseLuSolver:
    """Partial-pivoting LU (LAPACK getrf / getrs)."""

    def solve(self, a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        with warnings.catch_warnings():
            warnings.simplefilter("error", LinAlgWarning)
            try:
                lu, piv = lu_factor(a, check_finite=True)
            except (LinAlgWarning, ValueError) as exc:
                raise np.linalg.LinAlgError(str(exc)) from exc
        if np.any(np.diag(lu) == 0):
            raise np.linalg.LinAlgError("singular matrix")
        return lu_solve((lu, piv), rhs)


class SparseSolver:
    """SuperLU through ``scipy.sparse.linalg.spsolve``."""

    def solve(self, a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        with warnings.catch_warnings():
            warnings.simplefilter("error", MatrixRankWarning)
            try:
                out = spsolve(csc_matrix(a), rhs)
            except (MatrixRankWarning, RuntimeError) as exc:
                raise np.linalg.LinAlgError(str(exc)) from exc
        if not np.all(np.isfinite(out)):
            raise np.linalg.LinAlgError("sparse solve produced non-finite values")
        return np.atleast_1d(out)


def make_linear_solver(kind: str) -> LinearSolver:
    return SparseSolver() if kind == "sparse" else DenseLuSolver()


# --------------------------------------------------------------------------- #
# Helpers
# --------------------------------------------------------------------------- #
def _check_state(case: NetworkCase, y: AdmittanceMatrix, state: PfState) -> None:
    if state.v_mag.size != case.n_bus or y.n_bus != case.n_bus:
        raise ContractViolation(
            f"state has {state.v_mag.size} buses, admittance {y.n_bus}, case {case.n_bus}"
        )


def flat_start(case: NetworkCase) -> PfState:
    """V = 1 (setpoint at slack/PV buses), theta = 0 (slack keeps its angle)."""
    v_mag = np.ones(case.n_bus)
    held = np.r_[case.slack_index, case.pv_indices].astype(np.int64)
    v_mag[held] = case.v_setpoint[held]
    v_ang = np.zeros(case.n_bus)
    v_ang[case.slack_index] = case.slack_angle
    return PfState(v_mag, v_ang)


def specified_injections(case: NetworkCase, injections: InjectionSample) -> Tuple[np.ndarray, np.ndarray]:
    """Net specified (P, Q) per bus from x = [P_g(PV); P_d(PQ); Q_d(PQ)]."""
    x = injections.x
    if x.size != case.input_dim:
        raise ContractViolation(f"injection vector has {x.size} entries, case expects {case.input_dim}")
    npv, npq = case.n_pv, case.n_pq
    p = case.p_generation - case.p_demand
    q = -case.q_demand.copy()
    p[case.pv_indices] = x[:npv] - case.p_demand[case.pv_indices]
    p[case.pq_indices] = -x[npv : npv + npq]
    q[case.pq_indices] = -x[npv + npq :]
    return p, q


def _power_injections(y: AdmittanceMatrix, state: PfState) -> np.ndarray:
    """Calculated complex injection S_i = V_i conj(sum_j Y_ij V_j)."""
    v = state.complex_voltage
    return v * np.conj(y.ybus @ v)


# --------------------------------------------------------------------------- #
# Mismatch / Jacobian
# --------------------------------------------------------------------------- #
def mismatch(
    case: NetworkCase,
    y: AdmittanceMatrix,
    state: PfState,
    injections: InjectionSample,
) -> np.ndarray:
    """``[dP(PV); dP(PQ); dQ(PQ)]`` with dP = P_spec - P_calc (length N_g + 2 N_l)."""
    _check_state(case, y, state)
    p_spec, q_spec = specified_injections(case, injections)
    s = _power_injections(y, state)
    pvpq = case.non_slack_indices
    pq = case.pq_indices
    return np.r_[p_spec[pvpq] - s.real[pvpq], q_spec[pq] - s.imag[pq]]


def jacobian(case: NetworkCase, y: AdmittanceMatrix, state: PfState) -> np.ndarray:
    """
    Derivative of :func:`mismatch` with respect to
    ``[theta(PV); theta(PQ); V(PQ)]`` (the negated power-flow Jacobian).
    """
    _check_state(case, y, state)
    ybus = y.dense
    v = state.complex_voltage
    ibus = ybus @ v
    v_norm = v / np.abs(v)

    ds_dva = 1j * v[:, None] * np.conj(np.diag(ibus) - ybus * v[None, :])
    ds_dvm = v[:, None] * np.conj(ybus * v_norm[None, :]) + np.diag(np.conj(ibus) * v_norm)

    pvpq = case.non_slack_indices
    pq = case.pq_indices
    j11 = ds_dva[np.ix_(pvpq, pvpq)].real
    j12 = ds_dvm[np.ix_(pvpq, pq)].real
    j21 = ds_dva[np.ix_(pq, pvpq)].imag
    j22 = ds_dvm[np.ix_(pq, pq)].imag
    return -np.block([[j11, j12], [j21, j22]])


# --------------------------------------------------------------------------- #
# Newton–Raphson
# --------------------------------------------------------------------------- #
def _pin_known(case: NetworkCase, state: PfState) -> Tuple[np.ndarray, np.ndarray]:
    v_mag = np.array(state.v_mag, dtype=float, copy=True)
    v_ang = np.array(state.v_ang, dtype=float, copy=True)
    held = np.r_[case.slack_index, case.pv_indices].astype(np.int64)
    v_mag[held] = case.v_setpoint[held]
    v_ang[case.slack_index] = case.slack_angle
    return v_mag, v_ang


def solve_pf(
    case: NetworkCase,
    y: AdmittanceMatrix,
    injections: InjectionSample,
    opts: Optional[SolverOptions] = None,
    *,
    initial: Optional[PfState] = None,
    linear_solver: Optional[LinearSolver] = None,
) -> PfSolution:
    """
    Full Newton iterations from *initial* (flat start by default) until the
    mismatch infinity-norm drops to ``opts.tol``. Non-convergence within
    ``opts.max_iter`` is reported through ``converged=False``.
    """
    opts = opts or SolverOptions()
    solver = linear_solver or make_linear_solver(opts.linear_solver)
    start = initial if initial is not None else flat_start(case)
    _check_state(case, y, start)
    v_mag, v_ang = _pin_known(case, start)

    pvpq = case.non_slack_indices
    pq = case.pq_indices
    n_ang = pvpq.size

    state = PfState(v_mag, v_ang)
    f = mismatch(case, y, state, injections)
    norm = float(np.max(np.abs(f))) if f.size else 0.0
    iterations = 0

    while norm > opts.tol and iterations < opts.max_iter:
        iterations += 1
        jac = jacobian(case, y, state)
        try:
            dx = solver.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise SolverError(f"singular Jacobian ({exc})", iterations) from exc

        v_ang = v_ang.copy()
        v_mag = v_mag.copy()
        v_ang[pvpq] += dx[:n_ang]
        v_mag[pq] += dx[n_ang:]
        if not (np.all(np.isfinite(v_ang)) and np.all(np.isfinite(v_mag))):
            raise SolverError("non-finite state encountered", iterations)

        state = PfState(v_mag, v_ang)
        f = mismatch(case, y, state, injections)
        norm = float(np.max(np.abs(f))) if f.size else 0.0
        logger.debug("NR iteration %d: max mismatch %.3e", iterations, norm)

    converged = norm <= opts.tol
    if not converged:
        logger.debug("NR did not converge in %d iterations (max mismatch %.3e)", iterations, norm)
    return PfSolution(state=state, iterations=iterations, max_mismatch=norm, converged=converged)


# --------------------------------------------------------------------------- #
# Branch flows
# --------------------------------------------------------------------------- #
def branch_flows_batch(
    case: NetworkCase,
    v_mag: np.ndarray,
    v_ang: np.ndarray,
    y: Optional[AdmittanceMatrix] = None,
) -> BranchFlows:
    """Flows for n states at once (inputs n×N, outputs n×M)."""
    v_mag = np.atleast_2d(np.asarray(v_mag, dtype=float))
    v_ang = np.atleast_2d(np.asarray(v_ang, dtype=float))
    if v_mag.shape != v_ang.shape or v_mag.shape[1] != case.n_bus:
        raise ContractViolation(f"expected n×{case.n_bus} states, got {v_mag.shape} / {v_ang.shape}")
    y = y or build_ybus(case)
    f, t = case.branch_endpoints
    v = v_mag * np.exp(1j * v_ang)
    i_from = np.asarray((y.yf @ v.T).T)
    i_to = np.asarray((y.yt @ v.T).T)
    s_from = v[:, f] * np.conj(i_from)
    s_to = v[:, t] * np.conj(i_to)
    return BranchFlows(s_from.real, s_from.imag, s_to.real, s_to.imag)


def branch_flows(case: NetworkCase, state: PfState, y: Optional[AdmittanceMatrix] = None) -> BranchFlows:
    """
    From/to-end flows of every in-service branch. For tap = 1, shift = 0 the
    from-end values are exactly

        P_ij = -G_ij V_i^2 + V_i V_j (G_ij cos t_ij + B_ij sin t_ij)
        Q_ij =  B_ij V_i^2 + V_i V_j (G_ij sin t_ij - B_ij cos t_ij) - (b_ij / 2) V_i^2
    """
    if not (np.all(np.isfinite(state.v_mag)) and np.all(np.isfinite(state.v_ang))):
        raise ContractViolation("branch flows need a finite state")
    return branch_flows_batch(case, state.v_mag[None, :], state.v_ang[None, :], y).row(0)


__all__ = [
    "LinearSolver",
    "DenseLuSolver",
    "SparseSolver",
    "make_linear_solver",
    "flat_start",
    "specified_injections",
    "mismatch",
    "jacobian",
    "solve_pf",
    "branch_flows",
    "branch_flows_batch",
]
