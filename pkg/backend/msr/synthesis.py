"""
Policy Synthesis
Chooses candidate schedules and time fractions that minimize the worst per-type load,
then scans the switching rate for the lowest predicted response time.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .analysis import analyze
from .errors import InvalidInputError, LPUnboundedError, MSRError, UnservableTypeError
from .model import Schedule, Workload, enumerate_maximal_schedules
from .numerics import lp_maximize
from .policy import ModulatingProcess, PolicySpec, average_schedule, build_process

logger = logging.getLogger(__name__)

SUPPORT_TOL = 1e-12
STABILITY_TOL = 1e-9
TIE_TOL = 1e-9


@dataclass(frozen=True)
class SynthesisResult:
    """Candidate set W with time fractions pi and the loads they induce"""
    candidates: Tuple[Schedule, ...]
    pi: Tuple[float, ...]
    rho_per_type: Tuple[float, ...]
    rho_max: float
    feasible: bool
    num_maximal: int = 0

    def to_spec(self, mode: str = 'pmsr', alpha: float = 1.0, gamma: float = 1.0) -> PolicySpec:
        return PolicySpec(self.candidates, self.pi, alpha, gamma, mode)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'candidates': [list(s) for s in self.candidates],
            'pi': list(self.pi),
            'rho_per_type': list(self.rho_per_type),
            'rho_max': self.rho_max,
            'feasible': self.feasible,
            'num_maximal': self.num_maximal,
        }


def _tight_rows(U: np.ndarray, weights: np.ndarray, target: np.ndarray) -> np.ndarray:
    served = weights @ U
    return np.abs(served - target) <= 1e-9 * (1.0 + np.abs(target))


def reduce_support(U: np.ndarray, weights: np.ndarray, target: np.ndarray, max_support: int) -> np.ndarray:
    """
    Move along null-space directions of the binding rows (plus the sum row) until at
    most max_support weights are positive. Every row keeps weights @ U >= target.
    """
    weights = weights.copy()
    for _ in range(U.shape[0]):
        support = np.where(weights > SUPPORT_TOL)[0]
        if support.size <= max_support:
            break
        tight = _tight_rows(U, weights, target)
        rows = np.vstack([U[np.ix_(support, np.where(tight)[0])].T, np.ones((1, support.size))])
        _, sv, vt = np.linalg.svd(rows)
        rank = int(np.sum(sv > 1e-10 * max(1.0, sv[0] if sv.size else 1.0)))
        if rank >= support.size:
            logger.warning(f"Support of size {support.size} has no reducing direction")
            break
        direction = vt[rank]
        if not np.any(direction < -SUPPORT_TOL):
            direction = -direction

        # largest step keeping weights >= 0 and slack rows satisfied
        step = math.inf
        drop = None
        for k, j in enumerate(support):
            if direction[k] < -SUPPORT_TOL:
                t = weights[j] / -direction[k]
                if t < step:
                    step, drop = t, j
        served = weights @ U
        change = direction @ U[support]
        for i in np.where(~tight)[0]:
            if change[i] < -SUPPORT_TOL:
                t = (served[i] - target[i]) / -change[i]
                if t < step:
                    step, drop = t, None
        weights[support] += step * direction
        weights[np.abs(weights) <= SUPPORT_TOL] = 0.0
        if drop is not None:
            weights[drop] = 0.0
        weights = np.maximum(weights, 0.0)
        weights /= weights.sum()
    return weights


def _best_mixture(U: np.ndarray, r: np.ndarray, allowed: Sequence[int]) -> Tuple[float, np.ndarray]:
    """Largest z with z * r served by a mixture of the allowed rows of U; weights cover every row"""
    sub = U[list(allowed)]
    M, K = sub.shape
    objective = np.zeros(M + 1)
    objective[0] = 1.0
    A_ub = np.zeros((K, M + 1))
    A_ub[:, 0] = r
    A_ub[:, 1:] = -sub.T
    A_eq = np.zeros((1, M + 1))
    A_eq[0, 1:] = 1.0
    try:
        solution = lp_maximize(objective, A_eq=A_eq, b_eq=[1.0], A_ub=A_ub, b_ub=np.zeros(K))
    except LPUnboundedError as e:
        raise InvalidInputError(f"synthesis LP unbounded: {e}") from e
    weights = np.zeros(U.shape[0])
    weights[list(allowed)] = np.maximum(solution.values[1:], 0.0)
    return solution.objective, weights


def synthesize(w: Workload, schedules: Optional[List[Schedule]] = None) -> SynthesisResult:
    """
    Maximize z subject to sum_s pi_s u_s >= z * lambda / mu and sum_s pi_s = 1 over the
    maximal schedules; the worst per-type load is 1 / z.

    When several mixtures reach z*, schedules are dropped from the lexicographically largest
    down whenever z* survives without them. The candidate set is therefore the smallest one
    when sets are compared from their largest schedule backwards.
    """
    r = w.offered_load()
    if not np.any(r > 0):
        raise InvalidInputError("synthesis needs at least one positive arrival rate")
    schedules = sorted(schedules) if schedules is not None else enumerate_maximal_schedules(w)
    for i in np.where(r > 0)[0]:
        if not any(s[i] > 0 for s in schedules):
            raise UnservableTypeError(f"type '{w.types[i].name}' has positive arrival rate but fits in no schedule", int(i))

    U = np.array(schedules, dtype=float)
    M, K = U.shape
    allowed = list(range(M))
    z, weights = _best_mixture(U, r, allowed)
    if z <= 1e-12:
        raise UnservableTypeError("no mixture of schedules serves every type at positive rate")

    for j in range(M - 1, -1, -1):
        rest = [k for k in allowed if k != j]
        if weights[j] <= SUPPORT_TOL:
            weights[j] = 0.0
            allowed = rest
            continue
        if not rest:
            continue
        z_rest, rest_weights = _best_mixture(U, r, rest)
        if z_rest >= z * (1.0 - TIE_TOL):
            allowed, weights = rest, rest_weights
    logger.debug(f"Tie-break kept schedules {[schedules[j] for j in allowed]}")

    weights = weights / weights.sum()
    if np.sum(weights > SUPPORT_TOL) > K:
        weights = reduce_support(U, weights, z * r, K)

    keep = [j for j in range(M) if weights[j] > SUPPORT_TOL]
    pi = weights[keep] / weights[keep].sum()
    candidates = tuple(schedules[j] for j in keep)

    served = pi @ U[keep]
    rho = np.where(r > 0, r / np.where(served > 0, served, 1.0), 0.0)
    rho_max = 1.0 / z
    result = SynthesisResult(
        candidates=candidates,
        pi=tuple(float(p) for p in pi),
        rho_per_type=tuple(float(x) for x in rho),
        rho_max=float(rho_max),
        feasible=bool(rho_max < 1.0 - STABILITY_TOL),
        num_maximal=M,
    )
    logger.info(f"Synthesized {len(candidates)} candidates from {M} maximal schedules, rho_max={rho_max:.6f}")
    return result


def completion_rates(mp: ModulatingProcess, w: Workload) -> np.ndarray:
    """Long-run potential completion rate per type, mu * E[u]"""
    if mp.num_types != w.num_types:
        raise InvalidInputError(f"process schedules {mp.num_types} types, workload has {w.num_types}")
    return w.service_rates * average_schedule(mp)


def is_stable(mp: ModulatingProcess, w: Workload) -> bool:
    """True iff every type completes faster than it arrives"""
    return bool(np.all(completion_rates(mp, w) > w.arrival_rates))


@dataclass
class AlphaSearch:
    """Predicted response time across a grid of switching rates"""
    alpha_star: float
    grid: List[float]
    predicted: List[float]
    lower: List[float]
    upper: List[float]
    stable: List[bool]
    guaranteed_gap: float = math.inf
    errors: Dict[float, str] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        def finite(values):
            return [v if math.isfinite(v) else None for v in values]

        return {
            'alpha_star': self.alpha_star,
            'grid': list(self.grid),
            'predicted': finite(self.predicted),
            'lower': finite(self.lower),
            'upper': finite(self.upper),
            'stable': list(self.stable),
            'guaranteed_gap': self.guaranteed_gap if math.isfinite(self.guaranteed_gap) else None,
        }


def predict_alpha_star(w: Workload, spec: PolicySpec, alpha_grid: Sequence[float]) -> AlphaSearch:
    """
    Build the policy at every alpha on the grid and pick the one whose approximate mean
    response time is lowest. Also reports the bound curves and the guaranteed relative gap
    min(upper) / min(lower) - 1 between the picked policy and the best on the grid.
    """
    grid = [float(a) for a in alpha_grid]
    if not grid:
        raise InvalidInputError("alpha grid is empty")
    if any(a <= 0 for a in grid):
        raise InvalidInputError("alpha grid must be positive")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise InvalidInputError("alpha grid must be sorted")

    Lambda = w.total_arrival_rate
    predicted, lower, upper, stable = [], [], [], []
    errors: Dict[float, str] = {}
    for alpha in grid:
        try:
            report = analyze(build_process(spec.with_alpha(alpha), w), w)
        except MSRError as e:
            errors[alpha] = str(e)
            report = None
        if report is None or not report.stable:
            predicted.append(math.inf)
            lower.append(math.inf)
            upper.append(math.inf)
            stable.append(False)
            continue
        predicted.append(report.mean_response_time)
        lower.append(report.total_lower / Lambda)
        upper.append(report.total_upper / Lambda)
        stable.append(True)

    best = None
    for k, value in enumerate(predicted):
        if math.isfinite(value) and (best is None or value < predicted[best]):
            best = k
    if best is None:
        raise UnservableTypeError("every switching rate on the grid leaves some type unstable")

    min_lower = min(lower)
    min_upper = min(upper)
    gap = min_upper / min_lower - 1.0 if min_lower > 0 else math.inf
    logger.info(f"alpha*={grid[best]:g} predicted E[T]={predicted[best]:.6g} over {len(grid)} grid points")
    return AlphaSearch(
        alpha_star=grid[best],
        grid=grid,
        predicted=predicted,
        lower=lower,
        upper=upper,
        stable=stable,
        guaranteed_gap=gap,
        errors=errors,
    )


def synthesize_policy(
    w: Workload,
    mode: str = 'pmsr',
    alpha: Optional[float] = None,
    gamma: float = 1.0,
    alpha_grid: Optional[Sequence[float]] = None,
) -> Tuple[SynthesisResult, PolicySpec, ModulatingProcess, Optional[AlphaSearch]]:
    """
    Synthesize candidates and build the modulating process. Without an explicit alpha the
    grid minimizer is used when a grid is given, else alpha = 1.
    """
    result = synthesize(w)
    spec = result.to_spec(mode=mode, alpha=alpha if alpha is not None else 1.0, gamma=gamma)
    search = None
    if alpha is None and alpha_grid:
        if result.feasible:
            search = predict_alpha_star(w, spec, alpha_grid)
            spec = spec.with_alpha(search.alpha_star)
        else:
            logger.warning("Skipping alpha search: the workload is not stabilizable")
    return result, spec, build_process(spec, w), search
