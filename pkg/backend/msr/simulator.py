"""
Discrete-Event Simulation
Runs the multiresource job system under MSR policies (with optional BackFilling),
MaxWeight and First-Fit, plus the single-slot MSR-1 companion and Monte Carlo helpers.
"""

import csv
import heapq
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .analysis import nu_distribution, relative_completions
from .config import get_settings
from .errors import InvalidInputError, MSRError
from .model import FIT_TOL, Workload, enumerate_maximal_schedules
from .policy import SWITCHING, ModulatingProcess

logger = logging.getLogger(__name__)

BASELINES = ('maxweight', 'firstfit')


def replication_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent Philox stream for (seed, *keys) via SeedSequence spawn keys"""
    if seed < 0:
        raise InvalidInputError(f"seed must be non-negative, got {seed}")
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(sequence))


@dataclass(frozen=True)
class SimConfig:
    """Run length, seeding and guard settings shared by every simulator"""
    horizon: float = 10_000.0
    warmup: float = 1_000.0
    seed: int = 0
    replications: Optional[int] = None
    arrivals: str = 'poisson'
    instability_guard: Optional[int] = None
    ci_level: Optional[float] = None
    event_log: Optional[str] = None

    def __post_init__(self):
        if not self.horizon > 0:
            raise InvalidInputError(f"horizon must be positive, got {self.horizon}")
        if not 0 <= self.warmup < self.horizon:
            raise InvalidInputError(f"need 0 <= warmup < horizon, got warmup={self.warmup}, horizon={self.horizon}")
        if self.replications is not None and self.replications < 1:
            raise InvalidInputError(f"replications must be >= 1, got {self.replications}")
        if self.arrivals not in ('poisson', 'trace'):
            raise InvalidInputError(f"arrival source must be 'poisson' or 'trace', got '{self.arrivals}'")
        if self.instability_guard is not None and self.instability_guard < 1:
            raise InvalidInputError("instability guard must be positive")
        if self.ci_level is not None and not 0 < self.ci_level < 1:
            raise InvalidInputError(f"ci level must be in (0, 1), got {self.ci_level}")

    @property
    def num_replications(self) -> int:
        return self.replications if self.replications is not None else get_settings().default_replications

    @property
    def guard(self) -> int:
        return self.instability_guard if self.instability_guard is not None else get_settings().instability_guard

    @property
    def level(self) -> float:
        return self.ci_level if self.ci_level is not None else get_settings().ci_level

    def to_dict(self) -> Dict[str, Any]:
        return {
            'horizon': self.horizon,
            'warmup': self.warmup,
            'seed': self.seed,
            'replications': self.num_replications,
            'arrivals': self.arrivals,
            'instability_guard': self.guard,
            'ci_level': self.level,
        }


@dataclass
class Estimate:
    """Mean over replications with a Student-t half-width"""
    mean: float
    half_width: float
    samples: List[float] = field(default_factory=list)

    def within(self, value: float, widths: float = 1.0, slack: float = 0.0) -> bool:
        half = self.half_width if math.isfinite(self.half_width) else 0.0
        return abs(self.mean - value) <= widths * half + slack

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mean': self.mean if math.isfinite(self.mean) else None,
            'ci': self.half_width if math.isfinite(self.half_width) else None,
        }


def confidence_interval(samples: Sequence[float], level: float = 0.95) -> Estimate:
    values = np.array([s for s in samples if math.isfinite(s)], dtype=float)
    if values.size == 0:
        return Estimate(math.nan, math.nan, list(samples))
    mean = float(values.mean())
    if values.size < 2:
        return Estimate(mean, math.nan, list(samples))
    half = float(stats.t.ppf(0.5 + level / 2.0, values.size - 1) * values.std(ddof=1) / math.sqrt(values.size))
    return Estimate(mean, half, list(samples))


@dataclass
class _RunStats:
    """Accumulators for one replication, counted after warmup"""
    area: np.ndarray
    response_sum: np.ndarray
    response_count: np.ndarray
    potential: np.ndarray
    unused: np.ndarray
    slot_completions: np.ndarray
    backfill_completions: np.ndarray
    observed: float = 0.0
    switching_time: float = 0.0
    preemptions: int = 0
    backfill_preemptions: int = 0
    deferred_transitions: int = 0
    unstable: bool = False
    schedule_time: Dict[Tuple[int, ...], float] = field(default_factory=dict)
    unused_delta_sum: float = 0.0

    @classmethod
    def empty(cls, K: int) -> "_RunStats":
        return cls(
            area=np.zeros(K),
            response_sum=np.zeros(K),
            response_count=np.zeros(K, dtype=int),
            potential=np.zeros(K, dtype=int),
            unused=np.zeros(K, dtype=int),
            slot_completions=np.zeros(K, dtype=int),
            backfill_completions=np.zeros(K, dtype=int),
        )

    def mean_queue(self) -> np.ndarray:
        return self.area / self.observed if self.observed > 0 else np.full(self.area.shape, math.nan)

    def mean_response(self) -> np.ndarray:
        with np.errstate(invalid='ignore', divide='ignore'):
            return np.where(self.response_count > 0, self.response_sum / np.maximum(self.response_count, 1), math.nan)


@dataclass
class SimReport:
    """Replication-level summary of one simulated policy"""
    policy: str
    type_names: List[str]
    queue_length: List[Estimate]
    total_queue_length: Estimate
    response_time: List[Estimate]
    mean_response_time: Estimate
    unused_fraction: List[float]
    switching_fraction: float
    completions: List[int]
    potential_events: List[int]
    unused_events: List[int]
    slot_completions: List[int]
    backfill_completions: List[int]
    preemptions: int
    unstable: bool
    replications: int
    config: Dict[str, Any] = field(default_factory=dict)
    extras: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        def finite(v):
            return v if math.isfinite(v) else None

        extras = {}
        for key, value in sorted(self.extras.items()):
            if isinstance(value, Estimate):
                extras[key] = value.to_dict()
            elif isinstance(value, float):
                extras[key] = finite(value)
            else:
                extras[key] = value
        return {
            'policy': self.policy,
            'unstable': self.unstable,
            'replications': self.replications,
            'config': self.config,
            'types': [
                {
                    'name': name,
                    'queue_length': q.to_dict(),
                    'response_time': r.to_dict(),
                    'unused_fraction': finite(u),
                    'completions': c,
                }
                for name, q, r, u, c in zip(
                    self.type_names, self.queue_length, self.response_time, self.unused_fraction, self.completions
                )
            ],
            'total_queue_length': self.total_queue_length.to_dict(),
            'mean_response_time': self.mean_response_time.to_dict(),
            'switching_fraction': finite(self.switching_fraction),
            'preemptions': self.preemptions,
            'extras': extras,
        }


def _summarize(policy: str, names: List[str], runs: List[_RunStats], cfg: SimConfig,
               extras: Optional[Dict[str, Any]] = None) -> SimReport:
    level = cfg.level
    K = len(names)
    queues = [r.mean_queue() for r in runs]
    responses = [r.mean_response() for r in runs]
    overall = []
    for r in runs:
        count = int(r.response_count.sum())
        overall.append(float(r.response_sum.sum() / count) if count else math.nan)

    potential = sum(r.potential for r in runs)
    unused = sum(r.unused for r in runs)
    slot_done = sum(r.slot_completions for r in runs)
    backfill_done = sum(r.backfill_completions for r in runs)
    observed = sum(r.observed for r in runs)
    with np.errstate(invalid='ignore', divide='ignore'):
        unused_fraction = np.where(potential > 0, unused / np.maximum(potential, 1), 0.0)

    report = SimReport(
        policy=policy,
        type_names=names,
        queue_length=[confidence_interval([q[i] for q in queues], level) for i in range(K)],
        total_queue_length=confidence_interval([float(np.sum(q)) for q in queues], level),
        response_time=[confidence_interval([r[i] for r in responses], level) for i in range(K)],
        mean_response_time=confidence_interval(overall, level),
        unused_fraction=[float(u) for u in unused_fraction],
        switching_fraction=float(sum(r.switching_time for r in runs) / observed) if observed > 0 else 0.0,
        completions=[int(c) for c in sum(r.response_count for r in runs)],
        potential_events=[int(x) for x in potential],
        unused_events=[int(x) for x in unused],
        slot_completions=[int(x) for x in slot_done],
        backfill_completions=[int(x) for x in backfill_done],
        preemptions=int(sum(r.preemptions for r in runs)),
        unstable=any(r.unstable for r in runs),
        replications=len(runs),
        config=cfg.to_dict(),
        extras=extras or {},
    )
    logger.info(
        f"{policy}: {len(runs)} replications, E[Q]={report.total_queue_length.mean:.6g} "
        f"+/- {report.total_queue_length.half_width:.3g}, unstable={report.unstable}"
    )
    return report


class _EventLoop:
    """Future-event list with per-timer versions; stale timer entries are skipped when popped"""

    def __init__(self, w: Workload, cfg: SimConfig, rng: np.random.Generator, replication: int = 0, log=None):
        self.w = w
        self.K = w.num_types
        self.D = w.demand_matrix
        self.P = w.capacity_array
        self.mu = w.service_rates
        self.lam = w.arrival_rates
        self.cfg = cfg
        self.rng = rng
        self.replication = replication
        self.log = log
        self.t = 0.0
        self.heap: List[Tuple[float, int, str, int, int]] = []
        self.seq = 0
        self.versions: Dict[Tuple[str, int], int] = {}
        self.rates: Dict[Tuple[str, int], float] = {}
        self.queues: List[Deque[float]] = [deque() for _ in range(self.K)]
        self.stats = _RunStats.empty(self.K)
        self.trace: Optional[List[Tuple[float, int]]] = None
        self.trace_pos = 0

    # hooks
    def in_system(self) -> np.ndarray:
        raise NotImplementedError

    def footprint(self) -> np.ndarray:
        raise NotImplementedError

    def state_label(self) -> str:
        return ""

    def switching(self) -> bool:
        return False

    def observe(self, dt: float) -> None:
        pass

    def refresh(self) -> None:
        raise NotImplementedError

    def handle(self, kind: str, idx: int) -> None:
        raise NotImplementedError

    # machinery
    def push(self, time: float, kind: str, idx: int, version: int = 0) -> None:
        heapq.heappush(self.heap, (time, self.seq, kind, idx, version))
        self.seq += 1

    def set_rate(self, kind: str, idx: int, rate: float) -> None:
        key = (kind, idx)
        if self.rates.get(key) == rate:
            return
        self.rates[key] = rate
        version = self.versions.get(key, 0) + 1
        self.versions[key] = version
        if rate > 0:
            self.push(self.t + self.rng.exponential(1.0 / rate), kind, idx, version)

    def advance(self, new_t: float) -> None:
        start = max(self.t, self.cfg.warmup)
        if new_t > start:
            dt = new_t - start
            self.stats.area += self.in_system() * dt
            self.stats.observed += dt
            if self.switching():
                self.stats.switching_time += dt
            self.observe(dt)
        self.t = new_t

    def measuring(self) -> bool:
        return self.t >= self.cfg.warmup

    def start_arrivals(self, trace_arrivals: Optional[Sequence[Tuple[float, int]]]) -> None:
        if self.cfg.arrivals == 'trace':
            if trace_arrivals is None:
                raise InvalidInputError("trace arrival source needs a list of (time, type) arrivals")
            self.trace = sorted((float(t), int(i)) for t, i in trace_arrivals)
            self.next_trace_arrival()
            return
        for i in range(self.K):
            if self.lam[i] > 0:
                self.push(self.rng.exponential(1.0 / self.lam[i]), 'arrival', i)

    def next_trace_arrival(self) -> None:
        if self.trace_pos < len(self.trace):
            time, i = self.trace[self.trace_pos]
            self.trace_pos += 1
            self.push(time, 'arrival', i)

    def arrive(self, i: int) -> None:
        self.queues[i].append(self.t)
        if self.trace is not None:
            self.next_trace_arrival()
        else:
            self.push(self.t + self.rng.exponential(1.0 / self.lam[i]), 'arrival', i)

    def record_completion(self, i: int, arrival_time: float) -> None:
        if self.measuring():
            self.stats.response_sum[i] += self.t - arrival_time
            self.stats.response_count[i] += 1

    def check_resources(self) -> None:
        used = self.footprint()
        if np.any(used > self.P + FIT_TOL):
            raise MSRError(f"resource capacity exceeded at t={self.t:.6g}: used {used.tolist()}")

    def write_log(self, kind: str, idx: int) -> None:
        if self.log is not None:
            self.log.writerow([self.replication, f"{self.t:.9g}", kind, idx, self.state_label()])

    def run(self, trace_arrivals: Optional[Sequence[Tuple[float, int]]] = None) -> _RunStats:
        guard = self.cfg.guard
        self.start_arrivals(trace_arrivals)
        self.refresh()
        while self.heap:
            time, _, kind, idx, version = heapq.heappop(self.heap)
            if kind != 'arrival':
                if version != self.versions.get((kind, idx)):
                    continue
                # fired timers are redrawn by refresh
                self.rates.pop((kind, idx), None)
            if time > self.cfg.horizon:
                break
            self.advance(time)
            self.handle(kind, idx)
            self.write_log(kind, idx)
            self.refresh()
            self.check_resources()
            if kind == 'arrival' and int(self.in_system().sum()) > guard:
                self.stats.unstable = True
                logger.warning(f"Instability guard tripped at t={self.t:.6g} with {int(self.in_system().sum())} jobs")
                break
        if not self.stats.unstable and self.t < self.cfg.horizon:
            self.advance(self.cfg.horizon)
        return self.stats


class _MSRRun(_EventLoop):
    """Slots dictated by the modulating state; potential completions fire per slot at mu_i"""

    def __init__(self, w: Workload, mp: ModulatingProcess, cfg: SimConfig, rng: np.random.Generator,
                 replication: int = 0, log=None, backfill: bool = False):
        super().__init__(w, cfg, rng, replication, log)
        self.mp = mp
        self.u = mp.schedules.astype(int)
        self.setup = np.array([st.setup_counts for st in mp.states], dtype=int)
        G = np.array(mp.generator)
        self.out = -np.diag(G)
        self.targets: List[np.ndarray] = []
        self.cumulative: List[np.ndarray] = []
        for s in range(mp.num_states):
            row = G[s].copy()
            row[s] = 0.0
            nz = np.where(row > 0)[0]
            self.targets.append(nz)
            self.cumulative.append(np.cumsum(row[nz]) / row[nz].sum() if nz.size else np.zeros(0))
        self.coupled = [
            st.coupled_type if mp.mode == 'nmsr' and st.kind == SWITCHING else None for st in mp.states
        ]
        self.preemptive = mp.mode in ('pmsr', 'smsr')
        self.backfill = backfill
        self.state = 0
        self.pending: Optional[int] = None
        self.slots: List[List[float]] = [[] for _ in range(self.K)]
        self.backfilled: List[List[float]] = [[] for _ in range(self.K)]

    def in_system(self) -> np.ndarray:
        return np.array([len(self.queues[i]) + len(self.slots[i]) + len(self.backfilled[i]) for i in range(self.K)],
                        dtype=float)

    def backfilled_counts(self) -> np.ndarray:
        return np.array([len(b) for b in self.backfilled], dtype=int)

    def occupancy(self) -> np.ndarray:
        counts = np.array([len(self.slots[i]) for i in range(self.K)])
        return counts + self.setup[self.state] + self.backfilled_counts()

    def reserved(self, state: int) -> np.ndarray:
        """
        Resources the full schedule of `state` needs next to the backfilled jobs. Backfilled
        jobs that can move into free slots of their own type in `state` are not counted twice.
        """
        held = np.minimum([len(self.slots[i]) for i in range(self.K)], self.u[state])
        waiting = self.backfilled_counts()
        extra = waiting - np.minimum(waiting, self.u[state] - held)
        return (self.u[state] + self.setup[state] + extra) @ self.D

    def fits(self, state: int) -> bool:
        return bool(np.all(self.reserved(state) <= self.P + FIT_TOL))

    def footprint(self) -> np.ndarray:
        return self.occupancy() @ self.D

    def state_label(self) -> str:
        return self.mp.states[self.state].label or str(self.state)

    def switching(self) -> bool:
        return self.mp.states[self.state].kind == SWITCHING

    def room_for(self, i: int) -> bool:
        return bool(np.all(self.footprint() + self.D[i] <= self.P + FIT_TOL))

    def sample_next(self) -> int:
        targets = self.targets[self.state]
        if targets.size == 1:
            return int(targets[0])
        k = int(np.searchsorted(self.cumulative[self.state], self.rng.random(), side='right'))
        return int(targets[min(k, targets.size - 1)])

    def requeue(self, i: int, arrivals: List[float]) -> None:
        self.queues[i].extendleft(sorted(arrivals, reverse=True))

    def transition(self, target: int) -> None:
        # nMSR and sMSR never preempt backfilled jobs; the move waits for them to finish
        if self.backfill and self.mp.mode != 'pmsr' and not self.fits(target):
            self.pending = target
            self.stats.deferred_transitions += 1
            return
        self.apply(target)

    def apply(self, target: int) -> None:
        self.pending = None
        for i in range(self.K):
            preempted = []
            if self.backfill and self.mp.mode == 'pmsr' and self.backfilled[i]:
                preempted.extend(self.backfilled[i])
                self.stats.preemptions += len(self.backfilled[i])
                self.stats.backfill_preemptions += len(self.backfilled[i])
                self.backfilled[i] = []
            while len(self.slots[i]) > self.u[target, i]:
                preempted.append(self.slots[i].pop())
                self.stats.preemptions += 1
                if not self.preemptive:
                    logger.warning(f"Non-preemptive run preempted a type-{i} job at t={self.t:.6g}")
            if preempted:
                self.requeue(i, preempted)
        self.state = target

    def evict_backfill(self) -> bool:
        """Return the most recently arrived backfilled job to its queue"""
        latest = None
        for i in range(self.K):
            if self.backfilled[i] and (latest is None or self.backfilled[i][-1] > self.backfilled[latest][-1]):
                latest = i
        if latest is None:
            return False
        self.requeue(latest, [self.backfilled[latest].pop()])
        self.stats.preemptions += 1
        self.stats.backfill_preemptions += 1
        return True

    def fill(self) -> None:
        """
        Fill the slots of the current schedule, then backfill leftover capacity FCFS.
        While a transition is pending, slots are capped at the target schedule. A queued
        job whose slot is blocked by backfilled work evicts it under pMSR; otherwise it
        waits, and no new job is backfilled until it gets in.
        """
        s = self.state
        limit = self.u[s] if self.pending is None else np.minimum(self.u[s], self.u[self.pending])
        blocked = False
        for i in range(self.K):
            while len(self.slots[i]) < limit[i]:
                if self.backfilled[i]:
                    self.slots[i].append(self.backfilled[i].pop(0))
                    continue
                if not self.queues[i]:
                    break
                if self.backfill and not self.room_for(i):
                    if self.mp.mode == 'pmsr':
                        while not self.room_for(i) and self.evict_backfill():
                            pass
                    if not self.room_for(i):
                        blocked = True
                        break
                self.slots[i].append(self.queues[i].popleft())

        if self.backfill and self.pending is None and not blocked:
            while True:
                best = None
                for i in range(self.K):
                    if self.queues[i] and self.room_for(i):
                        if best is None or self.queues[i][0] < self.queues[best][0]:
                            best = i
                if best is None:
                    break
                self.backfilled[best].append(self.queues[best].popleft())

    def refresh(self) -> None:
        self.fill()
        s = self.state
        for i in range(self.K):
            self.set_rate('potential', i, float(self.mu[i] * self.u[s, i]))
            if self.backfill:
                self.set_rate('backfill', i, float(self.mu[i] * len(self.backfilled[i])))
        coupled = self.coupled[s] is not None
        self.set_rate('switch', 0, 0.0 if coupled or self.pending is not None else float(self.out[s]))

    def handle(self, kind: str, idx: int) -> None:
        if kind == 'arrival':
            self.arrive(idx)
        elif kind == 'potential':
            self.potential(idx)
        elif kind == 'backfill':
            self.record_completion(idx, self.backfilled[idx].pop(0))
            if self.measuring():
                self.stats.backfill_completions[idx] += 1
        elif kind == 'switch':
            self.transition(self.sample_next())
        if self.pending is not None and self.fits(self.pending):
            self.apply(self.pending)

    def potential(self, i: int) -> None:
        s = self.state
        slots = int(self.u[s, i])
        busy = len(self.slots[i])
        if busy > 0 and (busy >= slots or self.rng.random() * slots < busy):
            self.record_completion(i, self.slots[i].pop(0))
            if self.measuring():
                self.stats.slot_completions[i] += 1
        elif self.measuring():
            self.stats.unused[i] += 1
        if self.measuring():
            self.stats.potential[i] += 1
        if self.coupled[s] == i and self.pending is None:
            self.transition(self.sample_next())


class _MaxWeightRun(_EventLoop):
    """Serve argmax <u, Q> over maximal schedules, recomputed on every arrival and completion"""

    def __init__(self, w: Workload, cfg: SimConfig, rng: np.random.Generator, schedules: np.ndarray,
                 replication: int = 0, log=None):
        super().__init__(w, cfg, rng, replication, log)
        self.U = schedules
        self.choice = 0
        self.serving = np.zeros(self.K, dtype=int)

    def in_system(self) -> np.ndarray:
        return np.array([len(q) for q in self.queues], dtype=float)

    def footprint(self) -> np.ndarray:
        return self.serving @ self.D

    def state_label(self) -> str:
        return ','.join(str(int(u)) for u in self.U[self.choice])

    def observe(self, dt: float) -> None:
        key = tuple(int(u) for u in self.U[self.choice])
        self.stats.schedule_time[key] = self.stats.schedule_time.get(key, 0.0) + dt

    def refresh(self) -> None:
        Q = self.in_system()
        self.choice = maxweight_choice(self.U, Q)
        self.serving = np.minimum(Q, self.U[self.choice]).astype(int)
        for i in range(self.K):
            self.set_rate('service', i, float(self.mu[i] * self.serving[i]))

    def handle(self, kind: str, idx: int) -> None:
        if kind == 'arrival':
            self.arrive(idx)
        else:
            # oldest jobs hold the served slots
            self.record_completion(idx, self.queues[idx].popleft())
            if self.measuring():
                self.stats.slot_completions[idx] += 1


class _FirstFitRun(_EventLoop):
    """Non-preemptive; admit queued jobs FCFS whenever they fit the residual capacity"""

    def __init__(self, w: Workload, cfg: SimConfig, rng: np.random.Generator, replication: int = 0, log=None):
        super().__init__(w, cfg, rng, replication, log)
        self.running: List[List[float]] = [[] for _ in range(self.K)]

    def in_system(self) -> np.ndarray:
        return np.array([len(self.queues[i]) + len(self.running[i]) for i in range(self.K)], dtype=float)

    def footprint(self) -> np.ndarray:
        return np.array([len(r) for r in self.running]) @ self.D

    def refresh(self) -> None:
        while True:
            used = self.footprint()
            best = None
            for i in range(self.K):
                if self.queues[i] and np.all(used + self.D[i] <= self.P + FIT_TOL):
                    if best is None or self.queues[i][0] < self.queues[best][0]:
                        best = i
            if best is None:
                break
            self.running[best].append(self.queues[best].popleft())
        for i in range(self.K):
            self.set_rate('service', i, float(self.mu[i] * len(self.running[i])))

    def handle(self, kind: str, idx: int) -> None:
        if kind == 'arrival':
            self.arrive(idx)
        else:
            self.record_completion(idx, self.running[idx].pop(0))
            if self.measuring():
                self.stats.slot_completions[idx] += 1


def maxweight_choice(schedules: np.ndarray, queue_lengths: Sequence[float]) -> int:
    """Index of argmax <u, Q>; ties go to the first (lexicographically smallest) schedule"""
    weights = np.asarray(schedules, dtype=float) @ np.asarray(queue_lengths, dtype=float)
    return int(np.argmax(weights))


def _replicate(cfg: SimConfig, make_run, trace_arrivals=None) -> List[_RunStats]:
    runs = []
    if cfg.event_log:
        with open(cfg.event_log, 'w', newline='') as fh:
            writer = csv.writer(fh)
            writer.writerow(['replication', 'time', 'event', 'type', 'state'])
            for r in range(cfg.num_replications):
                runs.append(make_run(replication_rng(cfg.seed, r), r, writer).run(trace_arrivals))
    else:
        for r in range(cfg.num_replications):
            runs.append(make_run(replication_rng(cfg.seed, r), r, None).run(trace_arrivals))
    return runs


def simulate_msr(w: Workload, mp: ModulatingProcess, cfg: SimConfig, backfill: bool = False,
                 trace_arrivals: Optional[Sequence[Tuple[float, int]]] = None) -> SimReport:
    """Simulate an MSR policy, optionally filling leftover capacity First-Fit from the queue"""
    if mp.num_types != w.num_types:
        raise InvalidInputError(f"process schedules {mp.num_types} types, workload has {w.num_types}")
    mp.check_feasible(w)
    runs = _replicate(
        cfg,
        lambda rng, r, log: _MSRRun(w, mp, cfg, rng, r, log, backfill=backfill),
        trace_arrivals,
    )
    label = f"{mp.mode}+backfill" if backfill else mp.mode
    extras: Dict[str, Any] = {'alpha': mp.alpha}
    if backfill:
        extras['backfill_preemptions'] = int(sum(r.backfill_preemptions for r in runs))
        extras['deferred_transitions'] = int(sum(r.deferred_transitions for r in runs))
    return _summarize(label, [t.name for t in w.types], runs, cfg, extras)


def simulate_maxweight(w: Workload, cfg: SimConfig,
                       trace_arrivals: Optional[Sequence[Tuple[float, int]]] = None) -> SimReport:
    U = np.array(enumerate_maximal_schedules(w), dtype=int)
    runs = _replicate(cfg, lambda rng, r, log: _MaxWeightRun(w, cfg, rng, U, r, log), trace_arrivals)
    share: Dict[str, float] = {}
    observed = sum(run.observed for run in runs)
    for run in runs:
        for key, value in run.schedule_time.items():
            label = ','.join(str(u) for u in key)
            share[label] = share.get(label, 0.0) + value / observed
    return _summarize('maxweight', [t.name for t in w.types], runs, cfg, {'schedule_share': dict(sorted(share.items()))})


def simulate_firstfit(w: Workload, cfg: SimConfig,
                      trace_arrivals: Optional[Sequence[Tuple[float, int]]] = None) -> SimReport:
    runs = _replicate(cfg, lambda rng, r, log: _FirstFitRun(w, cfg, rng, r, log), trace_arrivals)
    return _summarize('firstfit', [t.name for t in w.types], runs, cfg)


def simulate_baseline(name: str, w: Workload, cfg: SimConfig,
                      trace_arrivals: Optional[Sequence[Tuple[float, int]]] = None) -> SimReport:
    if name == 'maxweight':
        return simulate_maxweight(w, cfg, trace_arrivals)
    if name == 'firstfit':
        return simulate_firstfit(w, cfg, trace_arrivals)
    raise InvalidInputError(f"unknown baseline '{name}', expected one of {BASELINES}")


def simulate_msr1(mp: ModulatingProcess, type_index: int, lambda_i: float, mu_i: float, cfg: SimConfig) -> SimReport:
    """
    Single queue served at rate mu_i * u_i(s) in modulating state s. Potential completions
    with an empty queue are unused service; the relative completions of the state at those
    instants are averaged into the 'unused_delta' extra.
    """
    if lambda_i <= 0 or mu_i <= 0:
        raise InvalidInputError("MSR-1 needs positive arrival and service rates")
    rates = mu_i * mp.schedules[:, type_index]
    delta = relative_completions(mp, type_index, mu_i).values
    G = np.array(mp.generator)
    out = -np.diag(G)
    coupled = [st.coupled_type == type_index and st.kind == SWITCHING and mp.mode == 'nmsr' for st in mp.states]
    targets, cumulative = [], []
    for s in range(mp.num_states):
        row = G[s].copy()
        row[s] = 0.0
        nz = np.where(row > 0)[0]
        targets.append(nz)
        cumulative.append(np.cumsum(row[nz]) / row[nz].sum() if nz.size else np.zeros(0))

    guard = cfg.guard
    runs: List[_RunStats] = []
    unused_delta: List[float] = []
    for r in range(cfg.num_replications):
        rng = replication_rng(cfg.seed, r)
        st = _RunStats.empty(1)
        jobs: Deque[float] = deque()
        t, s = 0.0, 0
        while True:
            service = rates[s]
            switch = 0.0 if coupled[s] else out[s]
            total = lambda_i + service + switch
            dt = rng.exponential(1.0 / total)
            new_t = min(t + dt, cfg.horizon)
            start = max(t, cfg.warmup)
            if new_t > start:
                st.area[0] += len(jobs) * (new_t - start)
                st.observed += new_t - start
                if mp.states[s].kind == SWITCHING:
                    st.switching_time += new_t - start
            t = new_t
            if t >= cfg.horizon:
                break
            measuring = t >= cfg.warmup
            x = rng.random() * total
            move = False
            if x < lambda_i:
                jobs.append(t)
                if len(jobs) > guard:
                    st.unstable = True
                    logger.warning(f"MSR-1 instability guard tripped at t={t:.6g}")
                    break
            elif x < lambda_i + service:
                if jobs:
                    arrival = jobs.popleft()
                    if measuring:
                        st.response_sum[0] += t - arrival
                        st.response_count[0] += 1
                        st.slot_completions[0] += 1
                elif measuring:
                    st.unused[0] += 1
                    st.unused_delta_sum += delta[s]
                if measuring:
                    st.potential[0] += 1
                move = coupled[s]
            else:
                move = True
            if move:
                nz = targets[s]
                k = 0 if nz.size == 1 else min(int(np.searchsorted(cumulative[s], rng.random(), side='right')), nz.size - 1)
                s = int(nz[k])
        runs.append(st)
        unused_delta.append(st.unused_delta_sum / st.unused[0] if st.unused[0] else math.nan)

    extras: Dict[str, Any] = {'unused_delta': confidence_interval(unused_delta, cfg.level)}
    mean_rate = float(mp.stationary @ rates)
    rho = lambda_i / mean_rate if mean_rate > 0 else math.inf
    if rho < 1:
        e_delta_nu = float(nu_distribution(mp, type_index) @ delta)
        extras['unused_identity'] = (rho + e_delta_nu) / (1.0 - rho) - extras['unused_delta'].mean
    return _summarize('msr1', [f"type-{type_index + 1}"], runs, cfg, extras)


def saturated_throughput(w: Workload, policy: Union[str, ModulatingProcess], horizon: float, seed: int = 0,
                         pattern: Optional[Sequence[int]] = None) -> float:
    """
    Completions per unit time when the backlog never runs dry. For 'fcfs' and 'firstfit'
    the backlog repeats `pattern` (type indices, default 0..K-1); 'fcfs' stops at the first
    job that does not fit while 'firstfit' keeps scanning. A modulating process keeps
    every slot busy.
    """
    if horizon <= 0:
        raise InvalidInputError("horizon must be positive")
    rng = replication_rng(seed)
    mu = w.service_rates
    warmup = 0.1 * horizon
    completions = 0
    t = 0.0

    if isinstance(policy, ModulatingProcess):
        rates = mu @ policy.schedules.T
        G = np.array(policy.generator)
        out = -np.diag(G)
        s = 0
        while True:
            total = rates[s] + out[s]
            t += rng.exponential(1.0 / total)
            if t >= horizon:
                break
            if rng.random() * total < rates[s]:
                completions += int(t >= warmup)
            else:
                row = G[s].copy()
                row[s] = 0.0
                s = int(rng.choice(policy.num_states, p=row / row.sum()))
        return completions / (horizon - warmup)

    if policy not in ('fcfs', 'firstfit'):
        raise InvalidInputError(f"unknown saturation policy '{policy}'")
    pattern = list(pattern) if pattern is not None else list(range(w.num_types))
    if not pattern or any(not 0 <= i < w.num_types for i in pattern):
        raise InvalidInputError("pattern must list valid type indices")
    D = w.demand_matrix
    P = w.capacity_array
    backlog: Deque[int] = deque()
    running = np.zeros(w.num_types, dtype=int)

    def admit():
        while len(backlog) < 2 * len(pattern) + w.num_types:
            backlog.extend(pattern)
        k = 0
        while k < len(backlog):
            i = backlog[k]
            if np.all((running + np.eye(w.num_types, dtype=int)[i]) @ D <= P + FIT_TOL):
                running[i] += 1
                del backlog[k]
                continue
            if policy == 'fcfs':
                return
            k += 1

    admit()
    if not running.any():
        raise InvalidInputError("no job in the pattern fits the server")
    while True:
        rates = mu * running
        total = float(rates.sum())
        t += rng.exponential(1.0 / total)
        if t >= horizon:
            break
        i = int(np.searchsorted(np.cumsum(rates) / total, rng.random(), side='right'))
        i = min(i, w.num_types - 1)
        running[i] -= 1
        completions += int(t >= warmup)
        admit()
    return completions / (horizon - warmup)


def estimate_relative_completions(mp: ModulatingProcess, rates: Sequence[float], horizon: float,
                                  replications: int, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Monte Carlo estimate of lim C(t|s) - E[c] t per starting state s, integrating the
    completion rate along independent paths run side by side. Returns (means, standard errors).
    """
    rates = np.asarray(rates, dtype=float)
    N = mp.num_states
    if rates.shape != (N,):
        raise InvalidInputError(f"need one rate per state ({N}), got {rates.shape}")
    if replications < 2 or horizon <= 0:
        raise InvalidInputError("need at least two replications and a positive horizon")
    if N == 1:
        return np.zeros(1), np.zeros(1)

    G = np.array(mp.generator)
    out = -np.diag(G)
    jump = G / out[:, None]
    np.fill_diagonal(jump, 0.0)
    cumulative = np.cumsum(jump, axis=1)
    mean_rate = float(mp.stationary @ rates)

    means = np.zeros(N)
    errors = np.zeros(N)
    for start in range(N):
        rng = replication_rng(seed, start)
        state = np.full(replications, start)
        clock = np.zeros(replications)
        total = np.zeros(replications)
        active = np.ones(replications, dtype=bool)
        while active.any():
            idx = np.where(active)[0]
            hold = rng.exponential(1.0, idx.size) / out[state[idx]]
            end = np.minimum(clock[idx] + hold, horizon)
            total[idx] += rates[state[idx]] * (end - clock[idx])
            clock[idx] = end
            finished = end >= horizon
            active[idx[finished]] = False
            moving = idx[~finished]
            if moving.size:
                draws = rng.random(moving.size)
                nxt = (cumulative[state[moving]] < draws[:, None]).sum(axis=1)
                state[moving] = np.minimum(nxt, N - 1)
        samples = total - mean_rate * horizon
        means[start] = samples.mean()
        errors[start] = samples.std(ddof=1) / math.sqrt(replications)
    return means, errors
