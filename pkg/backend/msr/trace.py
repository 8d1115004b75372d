"""
Trace Ingestion
Reads job traces (arrival_time, cpu, mem, duration), groups jobs into types by demand,
thins the load and fits a Workload for synthesis and replay.
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidInputError, TraceParseError
from .model import JobType, ResourceVector, Workload
from .simulator import replication_rng

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ('arrival_time', 'cpu', 'mem', 'duration')


@dataclass(frozen=True)
class TraceRecord:
    """One job: arrival time (s), normalized cpu and memory demand, duration (s)"""
    arrival_time: float
    cpu: float
    mem: float
    duration: float

    @property
    def demand(self) -> Tuple[float, float]:
        return (self.cpu, self.mem)


@dataclass(frozen=True)
class TypedTrace:
    """Retained records with their type assignment and each type's representative demand"""
    demands: Tuple[Tuple[float, float], ...]
    records: Tuple[TraceRecord, ...]
    assignment: Tuple[int, ...]

    @property
    def num_types(self) -> int:
        return len(self.demands)

    def counts(self) -> List[int]:
        counts = [0] * self.num_types
        for k in self.assignment:
            counts[k] += 1
        return counts

    def timespan(self) -> float:
        if not self.records:
            return 0.0
        return self.records[-1].arrival_time - self.records[0].arrival_time

    def arrivals(self) -> List[Tuple[float, int]]:
        """(time since first arrival, type) pairs for replay"""
        if not self.records:
            return []
        t0 = self.records[0].arrival_time
        return [(r.arrival_time - t0, k) for r, k in zip(self.records, self.assignment)]


def parse_trace(path: Union[str, Path]) -> List[TraceRecord]:
    """Read a trace CSV; unknown extra columns are ignored"""
    try:
        records = _read_records(path)
    except UnicodeDecodeError as e:
        raise TraceParseError(f"{path} is not UTF-8 text ({e.reason} at byte {e.start})") from e

    records.sort(key=lambda r: r.arrival_time)
    logger.info(f"Parsed {len(records)} trace records from {path}")
    return records


def _read_records(path: Union[str, Path]) -> List[TraceRecord]:
    records = []
    with open(path, 'r', encoding='utf-8', newline='') as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise TraceParseError("missing header", line=1)
        header = [name.strip() for name in reader.fieldnames]
        missing = [c for c in TRACE_COLUMNS if c not in header]
        if missing:
            raise TraceParseError(f"header lacks column(s) {', '.join(missing)}", line=1)
        reader.fieldnames = header

        for row in reader:
            line = reader.line_num
            try:
                values = [float(row[c]) for c in TRACE_COLUMNS]
            except (TypeError, ValueError):
                raise TraceParseError(f"non-numeric field in row {dict((c, row.get(c)) for c in TRACE_COLUMNS)}", line=line)
            if any(not math.isfinite(v) for v in values):
                raise TraceParseError("non-finite field", line=line)
            arrival, cpu, mem, duration = values
            if arrival < 0 or cpu < 0 or mem < 0:
                raise TraceParseError("arrival time and demands must be non-negative", line=line)
            if duration <= 0:
                raise TraceParseError(f"duration must be positive, got {duration}", line=line)
            records.append(TraceRecord(arrival, cpu, mem, duration))
    return records


def write_trace(records: Sequence[TraceRecord], path: Union[str, Path]) -> None:
    with open(path, 'w', newline='') as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for r in records:
            writer.writerow([repr(float(v)) for v in (r.arrival_time, r.cpu, r.mem, r.duration)])


def _close(value: float, reference: float, tolerance: float) -> bool:
    if reference == 0.0:
        return value == 0.0
    return abs(value - reference) <= tolerance * abs(reference)


def group_types(records: Sequence[TraceRecord], tolerance: float = 0.001, top_n: int = 10) -> TypedTrace:
    """
    Greedy grouping in arrival order: a record joins the first type whose representative is
    within the relative tolerance in every dimension, else founds a new type. Only the top_n
    most popular types are kept.
    """
    if tolerance <= 0:
        raise InvalidInputError(f"tolerance must be positive, got {tolerance}")
    if top_n < 1:
        raise InvalidInputError(f"top_n must be at least 1, got {top_n}")

    representatives: List[Tuple[float, float]] = []
    counts: List[int] = []
    assignment: List[int] = []
    for r in records:
        for k, (cpu, mem) in enumerate(representatives):
            if _close(r.cpu, cpu, tolerance) and _close(r.mem, mem, tolerance):
                counts[k] += 1
                assignment.append(k)
                break
        else:
            representatives.append(r.demand)
            counts.append(1)
            assignment.append(len(representatives) - 1)

    ranked = sorted(range(len(counts)), key=lambda k: (-counts[k], k))[:top_n]
    kept = sorted(ranked)
    renumber = {old: new for new, old in enumerate(kept)}
    retained, retained_types = [], []
    for r, k in zip(records, assignment):
        if k in renumber:
            retained.append(r)
            retained_types.append(renumber[k])
    logger.info(f"Grouped {len(records)} records into {len(counts)} types, kept {len(kept)} ({len(retained)} records)")
    return TypedTrace(
        demands=tuple(representatives[k] for k in kept),
        records=tuple(retained),
        assignment=tuple(retained_types),
    )


def downsample(tt: TypedTrace, keep_fraction: float, seed: int = 0) -> TypedTrace:
    """Keep each record independently with probability keep_fraction"""
    if not 0 < keep_fraction <= 1:
        raise InvalidInputError(f"keep fraction must be in (0, 1], got {keep_fraction}")
    keep = replication_rng(seed).random(len(tt.records)) < keep_fraction
    return TypedTrace(
        demands=tt.demands,
        records=tuple(r for r, k in zip(tt.records, keep) if k),
        assignment=tuple(a for a, k in zip(tt.assignment, keep) if k),
    )


def fit_workload(tt: TypedTrace, capacity: ResourceVector) -> Workload:
    """lambda = count / timespan, mu = 1 / mean duration, demand = representative"""
    if capacity.dims != 2:
        raise InvalidInputError(f"trace workloads have cpu and mem; capacity has {capacity.dims} resources")
    span = tt.timespan()
    if span <= 0:
        raise InvalidInputError("trace spans zero time; cannot estimate arrival rates")
    durations: List[List[float]] = [[] for _ in range(tt.num_types)]
    for r, k in zip(tt.records, tt.assignment):
        durations[k].append(r.duration)
    types = []
    for k, (cpu, mem) in enumerate(tt.demands):
        if len(durations[k]) < 2:
            raise InvalidInputError(f"type {k + 1} has {len(durations[k])} record(s); need at least 2")
        types.append(
            JobType(
                name=f"type-{k + 1}",
                demand=ResourceVector((cpu, mem)),
                arrival_rate=len(durations[k]) / span,
                service_rate=1.0 / float(np.mean(durations[k])),
            )
        )
    return Workload(capacity=capacity, types=tuple(types))


def typed_trace_summary(tt: TypedTrace) -> Dict[str, Any]:
    span = tt.timespan()
    durations: List[List[float]] = [[] for _ in range(tt.num_types)]
    for r, k in zip(tt.records, tt.assignment):
        durations[k].append(r.duration)
    return {
        'records': len(tt.records),
        'timespan': span,
        'types': [
            {
                'type': k + 1,
                'demand': list(tt.demands[k]),
                'count': len(durations[k]),
                'lambda_hat': len(durations[k]) / span if span > 0 else None,
                'mu_hat': 1.0 / float(np.mean(durations[k])) if durations[k] else None,
            }
            for k in range(tt.num_types)
        ],
    }


def generate_synthetic_trace(
    demands: Sequence[Tuple[float, float]],
    arrival_rates: Sequence[float],
    mean_durations: Sequence[float],
    horizon: float,
    seed: int = 0,
    batch_mean: float = 1.0,
    duration_sigma: Optional[float] = None,
    jitter: float = 0.0004,
) -> List[TraceRecord]:
    """
    Synthetic cluster trace: per-type Poisson batch arrivals (geometric batch sizes with
    mean batch_mean), exponential durations or lognormal ones when duration_sigma is given,
    and demands jittered by at most +/- jitter relative.
    """
    if not (len(demands) == len(arrival_rates) == len(mean_durations)):
        raise InvalidInputError("demands, arrival rates and durations need one entry per type")
    if horizon <= 0 or batch_mean < 1:
        raise InvalidInputError("need a positive horizon and batch_mean >= 1")
    records: List[TraceRecord] = []
    for k, ((cpu, mem), lam, mean_d) in enumerate(zip(demands, arrival_rates, mean_durations)):
        rng = replication_rng(seed, k)
        if lam <= 0 or mean_d <= 0:
            raise InvalidInputError(f"type {k + 1} needs positive rate and duration")
        t = 0.0
        while True:
            t += rng.exponential(batch_mean / lam)
            if t >= horizon:
                break
            size = int(rng.geometric(1.0 / batch_mean))
            for _ in range(size):
                if duration_sigma is None:
                    duration = rng.exponential(mean_d)
                else:
                    duration = rng.lognormal(math.log(mean_d) - duration_sigma ** 2 / 2.0, duration_sigma)
                scale = 1.0 + rng.uniform(-jitter, jitter, size=2)
                records.append(TraceRecord(float(t), float(cpu * scale[0]), float(mem * scale[1]), float(duration)))
    records.sort(key=lambda r: r.arrival_time)
    return records
