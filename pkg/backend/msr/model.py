"""
Multiresource Workload Model
Resource vectors, job types, workloads, schedule feasibility and the schedulable set
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .config import get_settings
from .errors import (
    InfeasibleWorkloadError,
    InvalidInputError,
    LPUnboundedError,
    ResourceLimitError,
    UnservableTypeError,
)
from .numerics import lp_maximize

logger = logging.getLogger(__name__)

# Schedules are plain integer tuples: hashable and lexicographically ordered
Schedule = Tuple[int, ...]

FIT_TOL = 1e-9


@dataclass(frozen=True)
class ResourceVector:
    """Point in the non-negative R-dimensional resource space"""
    amounts: Tuple[float, ...]

    def __post_init__(self):
        amounts = tuple(float(a) for a in self.amounts)
        if len(amounts) < 1:
            raise InvalidInputError("resource vector needs at least one resource")
        if any(not np.isfinite(a) or a < 0 for a in amounts):
            raise InvalidInputError(f"resource amounts must be finite and non-negative: {amounts}")
        object.__setattr__(self, 'amounts', amounts)

    @property
    def dims(self) -> int:
        return len(self.amounts)

    def fits_in(self, other: "ResourceVector") -> bool:
        if self.dims != other.dims:
            raise InvalidInputError(f"dimension mismatch: {self.dims} vs {other.dims}")
        return all(a <= b + FIT_TOL for a, b in zip(self.amounts, other.amounts))


@dataclass(frozen=True)
class JobType:
    """A job class: resource demand, Poisson arrival rate and exponential service rate"""
    name: str
    demand: ResourceVector
    arrival_rate: float
    service_rate: float

    def __post_init__(self):
        if not any(a > 0 for a in self.demand.amounts):
            raise InvalidInputError(f"type '{self.name}' demands nothing; it would be unbounded")
        if not np.isfinite(self.arrival_rate) or self.arrival_rate < 0:
            raise InvalidInputError(f"type '{self.name}' has invalid arrival rate {self.arrival_rate}")
        if not np.isfinite(self.service_rate) or self.service_rate <= 0:
            raise InvalidInputError(f"type '{self.name}' needs a positive service rate, got {self.service_rate}")


@dataclass(frozen=True)
class Workload:
    """K job types sharing one server of capacity P"""
    capacity: ResourceVector
    types: Tuple[JobType, ...]
    _demand: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        types = tuple(self.types)
        if not types:
            raise InvalidInputError("workload needs at least one job type")
        for t in types:
            if t.demand.dims != self.capacity.dims:
                raise InvalidInputError(
                    f"type '{t.name}' has {t.demand.dims} resources, capacity has {self.capacity.dims}"
                )
            if not t.demand.fits_in(self.capacity):
                logger.warning(f"Type '{t.name}' demands {t.demand.amounts}, more than capacity {self.capacity.amounts}")
        object.__setattr__(self, 'types', types)
        demand = np.array([t.demand.amounts for t in types], dtype=float)
        demand.setflags(write=False)
        object.__setattr__(self, '_demand', demand)

    @property
    def num_types(self) -> int:
        return len(self.types)

    @property
    def num_resources(self) -> int:
        return self.capacity.dims

    @property
    def demand_matrix(self) -> np.ndarray:
        return self._demand

    @property
    def capacity_array(self) -> np.ndarray:
        return np.array(self.capacity.amounts, dtype=float)

    @property
    def arrival_rates(self) -> np.ndarray:
        return np.array([t.arrival_rate for t in self.types], dtype=float)

    @property
    def service_rates(self) -> np.ndarray:
        return np.array([t.service_rate for t in self.types], dtype=float)

    @property
    def total_arrival_rate(self) -> float:
        return float(sum(t.arrival_rate for t in self.types))

    def offered_load(self) -> np.ndarray:
        """lambda / mu per type"""
        return self.arrival_rates / self.service_rates

    def scaled(self, factor: float) -> "Workload":
        """Same workload with every arrival rate multiplied by factor"""
        if factor <= 0:
            raise InvalidInputError(f"scale factor must be positive, got {factor}")
        return Workload(
            capacity=self.capacity,
            types=tuple(
                JobType(t.name, t.demand, t.arrival_rate * factor, t.service_rate) for t in self.types
            ),
        )

    def footprint(self, counts: Sequence[float]) -> np.ndarray:
        """Resources used by a vector of per-type job counts"""
        counts = np.asarray(counts, dtype=float)
        if counts.shape != (self.num_types,):
            raise InvalidInputError(f"schedule has {counts.shape[0] if counts.ndim else 0} entries, expected {self.num_types}")
        return counts @ self._demand

    def to_dict(self) -> Dict[str, Any]:
        return {
            'capacity': list(self.capacity.amounts),
            'types': [
                {
                    'name': t.name,
                    'demand': list(t.demand.amounts),
                    'lambda': t.arrival_rate,
                    'mu': t.service_rate,
                }
                for t in self.types
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Workload":
        try:
            capacity = ResourceVector(tuple(data['capacity']))
            types = tuple(
                JobType(
                    name=str(entry.get('name', f"type-{i + 1}")),
                    demand=ResourceVector(tuple(entry['demand'])),
                    arrival_rate=float(entry['lambda']),
                    service_rate=float(entry['mu']),
                )
                for i, entry in enumerate(data['types'])
            )
        except InvalidInputError:
            raise
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise InvalidInputError(f"malformed workload document: missing or bad field {e}") from e
        return cls(capacity=capacity, types=types)


def make_workload(
    capacity: Sequence[float],
    demands: Sequence[Sequence[float]],
    arrival_rates: Sequence[float],
    service_rates: Sequence[float],
    names: Optional[Sequence[str]] = None,
) -> Workload:
    """Convenience constructor from plain sequences"""
    if not (len(demands) == len(arrival_rates) == len(service_rates)):
        raise InvalidInputError("demands, arrival rates and service rates must have one entry per type")
    names = list(names) if names is not None else [f"type-{i + 1}" for i in range(len(demands))]
    return Workload(
        capacity=ResourceVector(tuple(capacity)),
        types=tuple(
            JobType(names[i], ResourceVector(tuple(demands[i])), float(arrival_rates[i]), float(service_rates[i]))
            for i in range(len(demands))
        ),
    )


def load_workload(path: Union[str, Path]) -> Workload:
    """Read a workload JSON document"""
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            data = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise InvalidInputError(f"{path}: invalid JSON ({e})") from e
    return Workload.from_dict(data)


def _check_schedule(s: Sequence[int], w: Workload) -> None:
    if len(s) != w.num_types:
        raise InvalidInputError(f"schedule has {len(s)} entries, workload has {w.num_types} types")
    if any(int(u) != u or u < 0 for u in s):
        raise InvalidInputError(f"schedule entries must be non-negative integers: {tuple(s)}")


def feasible(s: Sequence[int], w: Workload) -> bool:
    """True iff sum_i u_i D_i <= P component-wise"""
    _check_schedule(s, w)
    used = w.footprint(s)
    return bool(np.all(used <= w.capacity_array + FIT_TOL))


def feasible_with_setup(s: Sequence[int], setup: Sequence[int], w: Workload) -> bool:
    """Feasibility of a serving schedule plus resources held by jobs in setup"""
    _check_schedule(s, w)
    _check_schedule(setup, w)
    total = tuple(a + b for a, b in zip(s, setup))
    return feasible(total, w)


def max_count(demand: Sequence[float], room: Sequence[float]) -> int:
    """Largest n with n * demand <= room, ignoring zero-demand resources"""
    bound = None
    for d, r in zip(demand, room):
        if d > 0:
            n = int(np.floor((r + FIT_TOL) / d))
            bound = n if bound is None else min(bound, n)
    return max(bound, 0) if bound is not None else 0


def enumerate_maximal_schedules(w: Workload, max_schedules: Optional[int] = None) -> List[Schedule]:
    """
    All feasible schedules to which no further job of any type fits,
    deduplicated and sorted lexicographically.
    """
    cap = max_schedules if max_schedules is not None else get_settings().max_schedules
    K = w.num_types
    demands = [t.demand.amounts for t in w.types]
    capacity = list(w.capacity.amounts)
    found = set()
    counts = [0] * K

    def fits(i: int, room: List[float]) -> bool:
        return all(d <= r + FIT_TOL for d, r in zip(demands[i], room))

    def visit(i: int, room: List[float]) -> None:
        if i == K - 1:
            # only the fullest choice for the last type can be maximal
            counts[i] = max_count(demands[i], room)
            rest = [r - counts[i] * d for r, d in zip(room, demands[i])]
            if not any(fits(j, rest) for j in range(K)):
                found.add(tuple(counts))
                if len(found) > cap:
                    raise ResourceLimitError(
                        f"more than {cap} maximal schedules; raise MSR_MAX_SCHEDULES to enumerate further", cap
                    )
            counts[i] = 0
            return
        for n in range(max_count(demands[i], room), -1, -1):
            counts[i] = n
            visit(i + 1, [r - n * d for r, d in zip(room, demands[i])])
        counts[i] = 0

    visit(0, capacity)
    schedules = sorted(found)
    logger.info(f"Enumerated {len(schedules)} maximal schedules for K={K}, R={w.num_resources}")
    return schedules


def system_load(w: Workload, schedules: Optional[List[Schedule]] = None) -> float:
    """
    Smallest rho with (lambda / mu) / rho in Conv(S): one over the largest z such that
    z * lambda / mu is a sub-convex combination of maximal schedules.
    """
    r = w.offered_load()
    if not np.any(r > 0):
        raise InvalidInputError("system load needs at least one positive arrival rate")
    schedules = schedules if schedules is not None else enumerate_maximal_schedules(w)
    for i in np.where(r > 0)[0]:
        if not any(s[i] > 0 for s in schedules):
            raise UnservableTypeError(
                f"type '{w.types[i].name}' has positive arrival rate but fits in no schedule", int(i)
            )

    U = np.array(schedules, dtype=float)  # M x K
    M = U.shape[0]
    # variables: z, theta_1..theta_M
    objective = np.zeros(M + 1)
    objective[0] = 1.0
    A_ub = np.zeros((w.num_types + 1, M + 1))
    A_ub[:w.num_types, 0] = r
    A_ub[:w.num_types, 1:] = -U.T
    A_ub[w.num_types, 1:] = 1.0
    b_ub = np.zeros(w.num_types + 1)
    b_ub[-1] = 1.0
    try:
        solution = lp_maximize(objective, A_ub=A_ub, b_ub=b_ub)
    except LPUnboundedError as e:
        raise InvalidInputError(f"system load LP unbounded: {e}") from e
    z = solution.objective
    if z <= 1e-12:
        raise InfeasibleWorkloadError("workload cannot be served at any positive throughput")
    return 1.0 / z
