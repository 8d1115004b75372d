"""
Queue Length Analysis
Relative completions, completion-weighted state distribution, per-type queue-length
bounds and approximation, and the response-time roll-up.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from .errors import (
    InvalidInputError,
    SingularSystemError,
    TypeNeverServedError,
    UnstableTypeError,
)
from .model import Workload
from .numerics import RESIDUAL_TOL, erlang_c, solve_linear
from .policy import ModulatingProcess

logger = logging.getLogger(__name__)

# 1 - rho below this is reported as unstable
UNSTABLE_MARGIN = 1e-9


@dataclass(frozen=True, eq=False)
class DeltaVector:
    """Relative completions per modulating state, in jobs"""
    values: np.ndarray
    type_index: int

    @property
    def max(self) -> float:
        return float(np.max(self.values))

    @property
    def min(self) -> float:
        return float(np.min(self.values))

    def expectation(self, weights: np.ndarray) -> float:
        return float(np.asarray(weights) @ self.values)

    def to_list(self) -> List[float]:
        return [float(v) for v in self.values]


def _completion_rates(mp: ModulatingProcess, type_index: int, mu_i: float) -> np.ndarray:
    if not 0 <= type_index < mp.num_types:
        raise InvalidInputError(f"type index {type_index} out of range for {mp.num_types} types")
    if mu_i <= 0:
        raise InvalidInputError(f"service rate must be positive, got {mu_i}")
    return mu_i * mp.schedules[:, type_index]


def relative_completions(mp: ModulatingProcess, type_index: int, mu_i: float) -> DeltaVector:
    """
    Solve G Delta = E[c] 1 - c with the last balance row replaced by pi Delta = 0,
    where c(s) = mu_i * u_i(s) is the per-state completion rate.
    """
    rates = _completion_rates(mp, type_index, mu_i)
    pi = mp.stationary
    n = mp.num_states
    if n == 1:
        return DeltaVector(np.zeros(1), type_index)

    mean_rate = float(pi @ rates)
    G = np.array(mp.generator, dtype=float)
    scale = max(1.0, float(np.max(np.abs(G))))
    A = G.copy()
    rhs = mean_rate - rates
    A[-1, :] = pi * scale
    rhs[-1] = 0.0
    delta = solve_linear(A, rhs)

    residual = G @ delta - (mean_rate - rates)
    if np.max(np.abs(residual)) > RESIDUAL_TOL * scale * (1.0 + np.max(np.abs(rates))):
        raise SingularSystemError(f"relative completions residual {np.max(np.abs(residual)):.3e} too large")
    return DeltaVector(delta, type_index)


def two_state_delta(r1: float, r2: float, c1: float, c2: float) -> np.ndarray:
    """Closed form for a two-state process with out-rates (r1, r2) and completion rates (c1, c2)"""
    if r1 <= 0 or r2 <= 0:
        raise InvalidInputError("two-state out-rates must be positive")
    total = (r1 + r2) ** 2
    return np.array([r1 * (c1 - c2) / total, r2 * (c2 - c1) / total])


def nu_distribution(mp: ModulatingProcess, type_index: int) -> np.ndarray:
    """Stationary distribution reweighted by the type's schedule count"""
    u = mp.schedules[:, type_index]
    weights = mp.stationary * u
    total = float(weights.sum())
    if total <= 0:
        raise TypeNeverServedError(type_index)
    return weights / total


@dataclass
class TypeAnalysis:
    """Per-type load, bounds and approximation of the mean number in system"""
    type_index: int
    name: str
    rho: float
    beta: int
    delta: Optional[DeltaVector]
    e_delta_nu: float
    lower: float
    upper: float
    approx: float
    k_star: float = 0.0
    queueing_probability: float = 0.0
    stable: bool = True

    def to_dict(self) -> Dict[str, Any]:
        def finite(v):
            return v if math.isfinite(v) else None

        return {
            'type': self.type_index,
            'name': self.name,
            'rho': finite(self.rho),
            'beta': self.beta,
            'delta': self.delta.to_list() if self.delta is not None else None,
            'e_delta_nu': finite(self.e_delta_nu),
            'lower': finite(self.lower),
            'upper': finite(self.upper),
            'approx': finite(self.approx),
            'k_star': self.k_star,
            'queueing_probability': finite(self.queueing_probability),
            'stable': self.stable,
        }


def _type_rho(mp: ModulatingProcess, w: Workload, type_index: int) -> float:
    lam = w.types[type_index].arrival_rate
    mean_rate = float(mp.stationary @ _completion_rates(mp, type_index, w.types[type_index].service_rate))
    if lam == 0:
        return 0.0
    if mean_rate <= 0:
        raise TypeNeverServedError(type_index)
    return lam / mean_rate


def queue_bounds(mp: ModulatingProcess, w: Workload, type_index: int) -> TypeAnalysis:
    """
    (rho + E[Delta(nu)]) / (1 - rho) shifted by -max Delta below and by -min Delta + beta above
    """
    jt = w.types[type_index]
    u = mp.schedules[:, type_index]
    beta = int(np.max(u))
    rho = _type_rho(mp, w, type_index)
    if 1.0 - rho < UNSTABLE_MARGIN:
        raise UnstableTypeError(type_index, rho)

    if rho == 0.0 and beta == 0:
        return TypeAnalysis(type_index, jt.name, 0.0, 0, DeltaVector(np.zeros(mp.num_states), type_index), 0.0, 0.0, 0.0, 0.0)

    delta = relative_completions(mp, type_index, jt.service_rate)
    e_delta_nu = delta.expectation(nu_distribution(mp, type_index))
    primary = (rho + e_delta_nu) / (1.0 - rho)
    return TypeAnalysis(
        type_index=type_index,
        name=jt.name,
        rho=rho,
        beta=beta,
        delta=delta,
        e_delta_nu=e_delta_nu,
        lower=primary - delta.max,
        upper=primary - delta.min + beta,
        approx=math.nan,
        k_star=float(mp.stationary @ u),
    )


def queue_approx(mp: ModulatingProcess, w: Workload, type_index: int) -> float:
    """Erlang-C weighted approximation, clamped into the bounds"""
    return _approximate(queue_bounds(mp, w, type_index)).approx


def _approximate(ta: TypeAnalysis) -> TypeAnalysis:
    if ta.rho == 0.0:
        ta.approx = min(max(0.0, ta.lower), ta.upper)
        return ta
    p_queue = erlang_c(ta.k_star, ta.rho)
    raw = p_queue * (ta.rho + ta.rho * ta.e_delta_nu) / (1.0 - ta.rho) + ta.rho * ta.k_star
    ta.queueing_probability = p_queue
    ta.approx = min(max(raw, ta.lower), ta.upper)
    return ta


@dataclass
class AnalysisReport:
    """Per-type analyses with Little's-law totals; totals are None when some type is unstable"""
    types: List[TypeAnalysis]
    total_arrival_rate: float
    unstable_types: List[int] = field(default_factory=list)
    total_queue_length: Optional[float] = None
    total_lower: Optional[float] = None
    total_upper: Optional[float] = None
    mean_response_time: Optional[float] = None
    weighted_queue_length: Optional[float] = None

    @property
    def stable(self) -> bool:
        return not self.unstable_types

    def to_dict(self) -> Dict[str, Any]:
        return {
            'stable': self.stable,
            'unstable_types': list(self.unstable_types),
            'types': [t.to_dict() for t in self.types],
            'total_arrival_rate': self.total_arrival_rate,
            'total_queue_length': self.total_queue_length,
            'total_lower': self.total_lower,
            'total_upper': self.total_upper,
            'mean_response_time': self.mean_response_time,
            'weighted_queue_length': self.weighted_queue_length,
        }


def analyze(mp: ModulatingProcess, w: Workload) -> AnalysisReport:
    """Analyze every type and roll up E[T] = sum_i E[Q_i] / Lambda"""
    if mp.num_types != w.num_types:
        raise InvalidInputError(f"process schedules {mp.num_types} types, workload has {w.num_types}")
    types: List[TypeAnalysis] = []
    unstable: List[int] = []
    for i, jt in enumerate(w.types):
        u = mp.schedules[:, i]
        try:
            types.append(_approximate(queue_bounds(mp, w, i)))
        except (UnstableTypeError, TypeNeverServedError) as e:
            rho = getattr(e, 'rho', math.inf)
            logger.warning(f"Type {i} ('{jt.name}') is unstable under this policy: {e}")
            unstable.append(i)
            types.append(TypeAnalysis(i, jt.name, rho, int(np.max(u)), None, math.nan,
                                      math.inf, math.inf, math.inf, float(mp.stationary @ u), stable=False))

    Lambda = w.total_arrival_rate
    report = AnalysisReport(types=types, total_arrival_rate=Lambda, unstable_types=unstable)
    if unstable:
        return report

    approx = np.array([t.approx for t in types])
    report.total_queue_length = float(approx.sum())
    report.total_lower = float(sum(t.lower for t in types))
    report.total_upper = float(sum(t.upper for t in types))
    if Lambda > 0:
        report.mean_response_time = report.total_queue_length / Lambda
        report.weighted_queue_length = float(w.arrival_rates @ approx) / Lambda
    logger.info(f"Analysis: E[Q]={report.total_queue_length:.6g}, E[T]={report.mean_response_time}")
    return report


def mmk_mean_number(k: int, rho: float) -> float:
    """Mean number in an M/M/k at per-server utilization rho, from the birth-death steady state"""
    if k < 1 or not 0 <= rho < 1:
        raise InvalidInputError(f"need k >= 1 and 0 <= rho < 1, got k={k}, rho={rho}")
    a = k * rho
    # probabilities up to k-1 then the geometric tail
    terms = [1.0]
    for n in range(1, k):
        terms.append(terms[-1] * a / n)
    tail = terms[-1] * a / k / (1.0 - rho)
    p0 = 1.0 / (sum(terms) + tail)
    mean_below = sum(n * t for n, t in enumerate(terms)) * p0
    # sum_{n>=k} n * p_k rho^(n-k) with p_k = terms[-1] * a / k * p0
    p_k = terms[-1] * a / k * p0
    mean_tail = p_k * (k / (1.0 - rho) + rho / (1.0 - rho) ** 2)
    return mean_below + mean_tail
