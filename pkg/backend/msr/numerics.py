"""
Numeric Kernels
Dense linear solves, a small two-phase simplex, CTMC stationary distributions and Erlang-C
"""

import math
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    InvalidInputError,
    LPInfeasibleError,
    LPUnboundedError,
    ReducibleChainError,
    SingularSystemError,
)

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-12
RESIDUAL_TOL = 1e-9
LP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LpSolution:
    """Optimal basic feasible solution of a maximization LP"""
    objective: float
    values: np.ndarray
    support: Tuple[int, ...]


def _as_matrix(A, name: str = "A") -> np.ndarray:
    M = np.asarray(A, dtype=float)
    if M.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-d matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return M


def solve_linear(A, b) -> np.ndarray:
    """Solve the square system A x = b, refusing numerically singular matrices"""
    M = _as_matrix(A)
    rhs = np.asarray(b, dtype=float).reshape(-1)
    n, m = M.shape
    if n != m:
        raise InvalidInputError(f"A must be square, got {n}x{m}")
    if rhs.shape[0] != n:
        raise InvalidInputError(f"b has length {rhs.shape[0]}, expected {n}")

    singular_values = np.linalg.svd(M, compute_uv=False)
    if singular_values[-1] <= PIVOT_TOL * max(1.0, singular_values[0]):
        raise SingularSystemError(
            f"matrix is singular within tolerance (smallest singular value {singular_values[-1]:.3e})"
        )
    try:
        x = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as e:
        raise SingularSystemError(str(e)) from e

    # one round of iterative refinement keeps the residual inside tolerance
    residual = rhs - M @ x
    if np.max(np.abs(residual), initial=0.0) > RESIDUAL_TOL * (1.0 + np.max(np.abs(rhs), initial=0.0)):
        x = x + np.linalg.solve(M, residual)
    return x


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row, :] /= T[row, col]
    for r in range(T.shape[0]):
        if r != row and T[r, col] != 0.0:
            T[r, :] -= T[r, col] * T[row, :]


def _simplex(T: np.ndarray, basis: List[int], cost: np.ndarray, allowed: np.ndarray) -> None:
    """Run Bland's-rule simplex in place on a canonical tableau [A | b]"""
    m = T.shape[0]
    max_iterations = 50 * (T.shape[1] + m) + 1000
    for _ in range(max_iterations):
        reduced = cost - cost[basis] @ T[:, :-1]
        candidates = np.where(allowed & (reduced > LP_TOL))[0]
        if candidates.size == 0:
            return
        col = int(candidates[0])

        column = T[:, col]
        rows = np.where(column > PIVOT_TOL)[0]
        if rows.size == 0:
            raise LPUnboundedError(f"objective unbounded along variable {col}")
        ratios = T[rows, -1] / column[rows]
        best = ratios.min()
        tied = rows[ratios <= best + LP_TOL * (1.0 + abs(best))]
        row = int(min(tied, key=lambda r: basis[r]))

        _pivot(T, row, col)
        basis[row] = col
    raise LPUnboundedError("simplex iteration limit reached (cycling suspected)")


def lp_maximize(
    objective: Sequence[float],
    A_eq=None,
    b_eq=None,
    A_ub=None,
    b_ub=None,
) -> LpSolution:
    """
    Maximize objective . x subject to A_eq x = b_eq, A_ub x <= b_ub, x >= 0.
    Dense two-phase simplex with Bland's rule.
    """
    c = np.asarray(objective, dtype=float).reshape(-1)
    n = c.shape[0]

    blocks = []
    rhs = []
    n_ub = 0
    if A_ub is not None:
        Aub = _as_matrix(A_ub, "A_ub").reshape(-1, n)
        bub = np.asarray(b_ub, dtype=float).reshape(-1)
        if bub.shape[0] != Aub.shape[0]:
            raise InvalidInputError("A_ub and b_ub disagree in row count")
        n_ub = Aub.shape[0]
        blocks.append(np.hstack([Aub, np.eye(n_ub)]))
        rhs.append(bub)
    if A_eq is not None:
        Aeq = _as_matrix(A_eq, "A_eq").reshape(-1, n)
        beq = np.asarray(b_eq, dtype=float).reshape(-1)
        if beq.shape[0] != Aeq.shape[0]:
            raise InvalidInputError("A_eq and b_eq disagree in row count")
        blocks.append(np.hstack([Aeq, np.zeros((Aeq.shape[0], n_ub))]))
        rhs.append(beq)

    if not blocks:
        if np.any(c > 0):
            raise LPUnboundedError("no constraints and a positive objective coefficient")
        return LpSolution(objective=0.0, values=np.zeros(n), support=())

    A = np.vstack(blocks)
    b = np.concatenate(rhs)
    m = A.shape[0]
    negative = b < 0
    A[negative] *= -1.0
    b[negative] *= -1.0

    n_struct = n + n_ub
    T = np.hstack([A, np.eye(m), b.reshape(-1, 1)])
    basis = list(range(n_struct, n_struct + m))

    # phase 1: drive the artificials to zero
    phase1_cost = np.zeros(n_struct + m)
    phase1_cost[n_struct:] = -1.0
    _simplex(T, basis, phase1_cost, np.ones(n_struct + m, dtype=bool))
    infeasibility = float(np.sum(T[:, -1][np.array(basis) >= n_struct]))
    if infeasibility > LP_TOL * (1.0 + float(np.max(np.abs(b), initial=0.0))):
        raise LPInfeasibleError(f"no feasible point (phase-1 residual {infeasibility:.3e})")

    # pivot zero-level artificials out, dropping redundant rows
    keep_rows = []
    for r in range(m):
        if basis[r] < n_struct:
            keep_rows.append(r)
            continue
        nonzero = np.where(np.abs(T[r, :n_struct]) > PIVOT_TOL)[0]
        if nonzero.size:
            col = int(nonzero[0])
            _pivot(T, r, col)
            basis[r] = col
            keep_rows.append(r)
    T = T[keep_rows, :]
    basis = [basis[r] for r in keep_rows]
    T = np.hstack([T[:, :n_struct], T[:, -1:]])

    # phase 2
    phase2_cost = np.concatenate([c, np.zeros(n_ub)])
    _simplex(T, basis, phase2_cost, np.ones(n_struct, dtype=bool))

    full = np.zeros(n_struct)
    full[basis] = T[:, -1]
    full = np.maximum(full, 0.0)
    x = full[:n]
    support = tuple(sorted(j for j in basis if j < n))
    return LpSolution(objective=float(c @ x), values=x, support=support)


def validate_generator(G) -> np.ndarray:
    """Check that G is a CTMC generator and return it as an array"""
    M = _as_matrix(G, "G")
    n, m = M.shape
    if n != m or n == 0:
        raise InvalidInputError(f"generator must be square and non-empty, got {n}x{m}")
    off = M - np.diag(np.diag(M))
    if np.any(off < -PIVOT_TOL):
        raise InvalidInputError("generator has negative off-diagonal rates")
    scale = max(1.0, float(np.max(np.abs(M))))
    if np.any(np.abs(M.sum(axis=1)) > RESIDUAL_TOL * scale):
        raise InvalidInputError("generator rows must sum to zero")
    return M


def stationary_distribution(G) -> np.ndarray:
    """Return pi with pi G = 0 and sum(pi) = 1 for an irreducible generator"""
    M = validate_generator(G)
    n = M.shape[0]
    if n == 1:
        return np.ones(1)

    # rescale so the normalization row is comparable to the balance rows
    scale = max(1.0, float(np.max(np.abs(M))))
    A = M.T / scale
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = solve_linear(A, b)
    except SingularSystemError as e:
        raise ReducibleChainError(f"generator is reducible: {e}") from e

    if np.any(pi <= PIVOT_TOL):
        raise ReducibleChainError("generator is reducible: some states carry zero stationary mass")
    pi = pi / pi.sum()
    return pi


def _erlang_c_integer(k: int, rho: float) -> float:
    if k == 0:
        return 1.0
    a = k * rho
    # Erlang-B recursion, then convert to Erlang-C
    blocking = 1.0
    for n in range(1, k + 1):
        blocking = a * blocking / (n + a * blocking)
    return k * blocking / (k - a * (1.0 - blocking))


def erlang_c(k: float, rho: float) -> float:
    """
    Probability that an arrival queues in an M/M/k with per-server utilization rho.
    Fractional k interpolates linearly between the neighbouring integers; k in (0, 1)
    interpolates against the zero-server value 1.
    """
    if k <= 0 or not math.isfinite(k):
        raise InvalidInputError(f"erlang_c needs k > 0, got {k}")
    if rho < 0 or not math.isfinite(rho):
        raise InvalidInputError(f"erlang_c needs rho >= 0, got {rho}")
    if rho >= 1.0:
        logger.warning(f"Erlang-C evaluated at saturated load rho={rho:.6g}, k={k:.6g}; returning 1.0")
        return 1.0
    lo = math.floor(k)
    hi = math.ceil(k)
    if lo == hi:
        return _erlang_c_integer(int(lo), rho)
    weight = k - lo
    return (1.0 - weight) * _erlang_c_integer(int(lo), rho) + weight * _erlang_c_integer(int(hi), rho)


def erlang_c_saturated(rho: float) -> bool:
    """Diagnostic flag companion to erlang_c"""
    return rho >= 1.0
