"""
Modulating Process Construction
Builds the CTMCs behind preemptive (pMSR), non-preemptive (nMSR) and setup-time (sMSR) policies
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError
from .model import Schedule, Workload, feasible_with_setup
from .numerics import stationary_distribution, validate_generator

logger = logging.getLogger(__name__)

MODES = ('pmsr', 'nmsr', 'smsr')
WORKING = 'working'
SWITCHING = 'switching'


@dataclass(frozen=True)
class ProcessState:
    """One modulating state: the schedule it serves and any jobs held in setup"""
    schedule: Schedule
    kind: str = WORKING
    setup_counts: Schedule = ()
    # nMSR switching states leave on a completion of this type
    coupled_type: Optional[int] = None
    label: str = ""

    @property
    def holds(self) -> Schedule:
        """Resources reserved in this state, serving plus setup"""
        if not self.setup_counts:
            return self.schedule
        return tuple(a + b for a, b in zip(self.schedule, self.setup_counts))


@dataclass(frozen=True)
class PolicySpec:
    """Candidate schedules W, their target time fractions pi, and the switching parameters"""
    candidates: Tuple[Schedule, ...]
    pi: Tuple[float, ...]
    alpha: float = 1.0
    gamma: float = 1.0
    mode: str = 'pmsr'

    def __post_init__(self):
        candidates = tuple(tuple(int(u) for u in s) for s in self.candidates)
        pi = tuple(float(p) for p in self.pi)
        if not candidates:
            raise InvalidInputError("policy needs at least one candidate schedule")
        if len(candidates) != len(pi):
            raise InvalidInputError(f"{len(candidates)} candidates but {len(pi)} probabilities")
        if any(p < 0 for p in pi) or abs(sum(pi) - 1.0) > 1e-9:
            raise InvalidInputError(f"pi must be a probability vector, got {pi}")
        if self.alpha <= 0 or not np.isfinite(self.alpha):
            raise InvalidInputError(f"switching rate alpha must be positive, got {self.alpha}")
        if self.gamma <= 0 or not np.isfinite(self.gamma):
            raise InvalidInputError(f"setup rate gamma must be positive, got {self.gamma}")
        if self.mode not in MODES:
            raise InvalidInputError(f"mode must be one of {MODES}, got '{self.mode}'")
        object.__setattr__(self, 'candidates', candidates)
        object.__setattr__(self, 'pi', pi)

    def with_alpha(self, alpha: float) -> "PolicySpec":
        return PolicySpec(self.candidates, self.pi, alpha, self.gamma, self.mode)

    def with_gamma(self, gamma: float) -> "PolicySpec":
        return PolicySpec(self.candidates, self.pi, self.alpha, gamma, self.mode)

    def with_mode(self, mode: str) -> "PolicySpec":
        return PolicySpec(self.candidates, self.pi, self.alpha, self.gamma, mode)

    def check_feasible(self, w: Workload) -> None:
        for s in self.candidates:
            if len(s) != w.num_types:
                raise InvalidInputError(f"candidate {s} has wrong length for {w.num_types} types")
            if not feasible_with_setup(s, (0,) * w.num_types, w):
                raise InvalidInputError(f"candidate {s} does not fit the server")


@dataclass(frozen=True, eq=False)
class ModulatingProcess:
    """Finite irreducible CTMC whose states dictate the served schedule"""
    states: Tuple[ProcessState, ...]
    generator: np.ndarray
    working_index: Dict[int, int]
    mode: str = 'pmsr'
    alpha: float = 1.0
    gamma: Optional[float] = None
    _stationary: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        G = validate_generator(self.generator).copy()
        if G.shape[0] != len(self.states):
            raise InvalidInputError(f"generator is {G.shape[0]}x{G.shape[0]} but there are {len(self.states)} states")
        K = len(self.states[0].schedule)
        states = []
        for st in self.states:
            if len(st.schedule) != K:
                raise InvalidInputError("all states must schedule the same number of types")
            setup = st.setup_counts if st.setup_counts else (0,) * K
            states.append(ProcessState(st.schedule, st.kind, setup, st.coupled_type, st.label))
        G.setflags(write=False)
        object.__setattr__(self, 'states', tuple(states))
        object.__setattr__(self, 'generator', G)
        pi = stationary_distribution(G)
        pi.setflags(write=False)
        object.__setattr__(self, '_stationary', pi)

    @property
    def num_states(self) -> int:
        return len(self.states)

    @property
    def num_types(self) -> int:
        return len(self.states[0].schedule)

    @property
    def schedules(self) -> np.ndarray:
        """N x K matrix of serving schedules"""
        return np.array([s.schedule for s in self.states], dtype=float)

    @property
    def stationary(self) -> np.ndarray:
        return self._stationary

    def working_states(self) -> List[int]:
        return sorted(self.working_index)

    def working_distribution(self) -> np.ndarray:
        """Stationary distribution conditioned on being in a working state, in candidate order"""
        positions = sorted(self.working_index, key=lambda p: self.working_index[p])
        mass = self._stationary[positions]
        return mass / mass.sum()

    def switching_fraction(self) -> float:
        return float(sum(self._stationary[j] for j, s in enumerate(self.states) if s.kind == SWITCHING))

    def check_feasible(self, w: Workload) -> None:
        """Every state's schedule plus setup footprint must fit the server"""
        for j, st in enumerate(self.states):
            if not feasible_with_setup(st.schedule, st.setup_counts, w):
                raise InvalidInputError(f"state {j} ({st.label}) exceeds server capacity")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mode': self.mode,
            'alpha': self.alpha,
            'gamma': self.gamma,
            'states': [
                {
                    'label': st.label,
                    'schedule': list(st.schedule),
                    'kind': st.kind,
                    'setup_counts': list(st.setup_counts),
                    'coupled_type': st.coupled_type,
                }
                for st in self.states
            ],
            'generator': [list(map(float, row)) for row in self.generator],
            'working_index': {str(k): v for k, v in sorted(self.working_index.items())},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModulatingProcess":
        try:
            states = tuple(
                ProcessState(
                    schedule=tuple(int(u) for u in entry['schedule']),
                    kind=entry.get('kind', WORKING),
                    setup_counts=tuple(int(u) for u in entry.get('setup_counts', [])),
                    coupled_type=entry.get('coupled_type'),
                    label=entry.get('label', ''),
                )
                for entry in data['states']
            )
            working_index = {int(k): int(v) for k, v in data['working_index'].items()}
            return cls(
                states=states,
                generator=np.array(data['generator'], dtype=float),
                working_index=working_index,
                mode=data.get('mode', 'pmsr'),
                alpha=float(data.get('alpha', 1.0)),
                gamma=data.get('gamma'),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidInputError(f"malformed modulating process document: {e}") from e


def _label(prefix: str, schedule: Sequence[int]) -> str:
    return f"{prefix}_{{{','.join(str(u) for u in schedule)}}}"


def _ordered_candidates(spec: PolicySpec) -> Tuple[List[Schedule], List[float], List[int]]:
    """Drop zero-probability candidates, merge duplicates, sort lexicographically"""
    merged: Dict[Schedule, float] = {}
    origin: Dict[Schedule, int] = {}
    for idx, (s, p) in enumerate(zip(spec.candidates, spec.pi)):
        if p <= 0.0:
            logger.warning(f"Dropping candidate {s} with zero time fraction")
            continue
        if s in merged:
            logger.warning(f"Merging duplicate candidate {s}")
        merged[s] = merged.get(s, 0.0) + p
        origin.setdefault(s, idx)
    if not merged:
        raise InvalidInputError("every candidate has zero probability")
    ordered = sorted(merged)
    total = sum(merged.values())
    return ordered, [merged[s] / total for s in ordered], [origin[s] for s in ordered]


class _ProcessBuilder:
    """Accumulates states and rates for a loop-structured modulating process"""

    def __init__(self, candidates: List[Schedule]):
        self.states: List[ProcessState] = []
        self.rates: Dict[Tuple[int, int], float] = {}
        self.K = len(candidates[0])
        self.working_positions = []
        for s in candidates:
            self.working_positions.append(self.add(ProcessState(s, WORKING, (0,) * self.K, None, _label('w', s))))

    def add(self, state: ProcessState) -> int:
        self.states.append(state)
        return len(self.states) - 1

    def connect(self, src: int, dst: int, rate: float) -> None:
        if src == dst:
            return
        self.rates[(src, dst)] = self.rates.get((src, dst), 0.0) + rate

    def build(self, origin: List[int], mode: str, alpha: float, gamma: Optional[float]) -> ModulatingProcess:
        n = len(self.states)
        G = np.zeros((n, n))
        for (a, b), rate in self.rates.items():
            G[a, b] += rate
        G -= np.diag(G.sum(axis=1))
        working_index = {pos: origin[k] for k, pos in enumerate(self.working_positions)}
        process = ModulatingProcess(
            states=tuple(self.states),
            generator=G,
            working_index=working_index,
            mode=mode,
            alpha=alpha,
            gamma=gamma,
        )
        logger.info(
            f"Built {mode} process: {len(self.working_positions)} working, "
            f"{n - len(self.working_positions)} switching states, alpha={alpha:g}"
        )
        return process


def build_pmsr(spec: PolicySpec) -> ModulatingProcess:
    """Lexicographic loop over the candidates; leaving state j happens at rate alpha / pi_j"""
    candidates, pi, origin = _ordered_candidates(spec)
    builder = _ProcessBuilder(candidates)
    N = len(candidates)
    for j in range(N):
        builder.connect(builder.working_positions[j], builder.working_positions[(j + 1) % N], spec.alpha / pi[j])
    return builder.build(origin, 'pmsr', spec.alpha, None)


def build_nmsr(spec: PolicySpec, mu: Sequence[float]) -> ModulatingProcess:
    """
    Loop over working states where each hop tears down the excess jobs of the source
    one completion at a time, lowest type index first. Increases happen on arrival in
    the target working state.
    """
    candidates, pi, origin = _ordered_candidates(spec)
    mu = [float(m) for m in mu]
    if len(mu) != len(candidates[0]):
        raise InvalidInputError(f"mu has {len(mu)} entries, schedules have {len(candidates[0])}")
    builder = _ProcessBuilder(candidates)
    N = len(candidates)
    if N == 1:
        return builder.build(origin, 'nmsr', spec.alpha, None)

    for a in range(N):
        b = (a + 1) % N
        src, dst = candidates[a], candidates[b]
        exit_rate = spec.alpha / pi[a]
        excess = [max(x - y, 0) for x, y in zip(src, dst)]
        total = sum(excess)
        if total == 0:
            builder.connect(builder.working_positions[a], builder.working_positions[b], exit_rate)
            continue

        steps = [i for i, e in enumerate(excess) for _ in range(e)]
        current = list(src)
        position = builder.add(ProcessState(tuple(current), SWITCHING, (0,) * len(src), steps[0], _label('t', current)))
        builder.connect(builder.working_positions[a], position, exit_rate)
        for k, i in enumerate(steps):
            rate = mu[i] * current[i]
            current[i] -= 1
            if k == len(steps) - 1:
                nxt = builder.working_positions[b]
            else:
                nxt = builder.add(
                    ProcessState(tuple(current), SWITCHING, (0,) * len(src), steps[k + 1], _label('t', current))
                )
            builder.connect(position, nxt, rate)
            position = nxt
    return builder.build(origin, 'nmsr', spec.alpha, None)


def build_smsr(spec: PolicySpec, gamma: Optional[float] = None) -> ModulatingProcess:
    """
    Loop over working states where each hop preempts every excess job of the source at
    once; the preempted jobs hold their resources through parallel exp(gamma) setups
    while the common part min(source, target) keeps serving.
    """
    gamma = float(gamma if gamma is not None else spec.gamma)
    if gamma <= 0:
        raise InvalidInputError(f"setup rate gamma must be positive, got {gamma}")
    candidates, pi, origin = _ordered_candidates(spec)
    builder = _ProcessBuilder(candidates)
    N = len(candidates)
    if N == 1:
        return builder.build(origin, 'smsr', spec.alpha, gamma)

    for a in range(N):
        b = (a + 1) % N
        src, dst = candidates[a], candidates[b]
        exit_rate = spec.alpha / pi[a]
        common = tuple(min(x, y) for x, y in zip(src, dst))
        setup = [x - c for x, c in zip(src, common)]
        total = sum(setup)
        if total == 0:
            builder.connect(builder.working_positions[a], builder.working_positions[b], exit_rate)
            continue

        previous = builder.working_positions[a]
        rate_in = exit_rate
        for remaining in range(total, 0, -1):
            position = builder.add(ProcessState(common, SWITCHING, tuple(setup), None, f"t_{remaining}"))
            builder.connect(previous, position, rate_in)
            previous, rate_in = position, remaining * gamma
            # setups finish in parallel; release the lowest type index first
            i = next(k for k, c in enumerate(setup) if c > 0)
            setup[i] -= 1
        builder.connect(previous, builder.working_positions[b], rate_in)
    return builder.build(origin, 'smsr', spec.alpha, gamma)


def build_process(spec: PolicySpec, w: Workload) -> ModulatingProcess:
    """Dispatch on spec.mode and check feasibility against the workload"""
    spec.check_feasible(w)
    if spec.mode == 'pmsr':
        mp = build_pmsr(spec)
    elif spec.mode == 'nmsr':
        mp = build_nmsr(spec, w.service_rates)
    else:
        mp = build_smsr(spec, spec.gamma)
    mp.check_feasible(w)
    return mp


def average_schedule(mp: ModulatingProcess) -> np.ndarray:
    """Stationary average schedule E[u]"""
    return mp.stationary @ mp.schedules


def constant_process(schedule: Sequence[int]) -> ModulatingProcess:
    """Single-state process that always serves the same schedule"""
    s = tuple(int(u) for u in schedule)
    return ModulatingProcess(
        states=(ProcessState(s, WORKING, (0,) * len(s), None, _label('w', s)),),
        generator=np.zeros((1, 1)),
        working_index={0: 0},
    )
