# Sample workloads and traces for exercising the scheduler

from typing import Dict, List

from msr.model import Workload, make_workload
from msr.trace import TraceRecord, generate_synthetic_trace

# Three resources, three types; the base arrival rates sit exactly at system load 1,
# so example_system(rho) is at load rho.
EXAMPLE_SYSTEM = {
    "capacity": [20, 15, 50],
    "demands": [[3, 7, 1], [4, 1, 1], [10, 1, 5]],
    "arrival_rates": [0.5, 2.0, 1.0],
    "service_rates": [1.0, 1.0, 1.0],
}

# Four VM types on a (cpu, memory, disk, network) host
VM_INSTANCE = {
    "capacity": [128, 256, 1024, 100],
    "demands": [[1, 4, 50, 1], [4, 1, 10, 10], [2, 2, 100, 5], [8, 4, 10, 1]],
    "arrival_rates": [4.0, 5.0, 2.0, 1.5],
    "service_rates": [1.0, 1.0, 1.0, 1.0],
}

# Known mixture for the VM instance: serving these schedules with these time
# fractions gives every type the same load
VM_INSTANCE_SCHEDULES = [(0, 7, 4, 10), (0, 5, 9, 5), (0, 10, 0, 0), (10, 9, 0, 0)]
VM_INSTANCE_PI = [0.07633588, 0.30534351, 0.00763359, 0.61068702]

# Normalized (cpu, mem) demands of five popular job shapes
TRACE_SHAPES = {
    "demands": [(0.25, 0.1), (0.125, 0.25), (0.5, 0.125), (0.0625, 0.0625), (0.375, 0.3)],
    "arrival_rates": [0.6, 0.8, 0.2, 1.6, 0.15],
    "mean_durations": [1.0, 0.8, 1.5, 0.5, 2.0],
}


def example_system(rho: float = 1.0) -> Workload:
    """The three-resource example system at system load rho"""
    return make_workload(
        EXAMPLE_SYSTEM["capacity"],
        EXAMPLE_SYSTEM["demands"],
        [rho * lam for lam in EXAMPLE_SYSTEM["arrival_rates"]],
        EXAMPLE_SYSTEM["service_rates"],
    )


def vm_instance() -> Workload:
    return make_workload(
        VM_INSTANCE["capacity"],
        VM_INSTANCE["demands"],
        VM_INSTANCE["arrival_rates"],
        VM_INSTANCE["service_rates"],
        names=["small", "cpu", "disk", "large"],
    )


def mm1(lam: float = 0.5, mu: float = 1.0) -> Workload:
    """One type that fits once: an M/M/1 queue"""
    return make_workload([1.0], [[1.0]], [lam], [mu])


def mmk(k: int, lam: float, mu: float = 1.0) -> Workload:
    """One type that fits k times: an M/M/k queue"""
    return make_workload([float(k)], [[1.0]], [lam], [mu])


def alternating_cores(lam_big: float = 0.5, lam_small: float = 0.5) -> Workload:
    """8 cores shared by 4-core and 2-core jobs"""
    return make_workload([8.0], [[4.0], [2.0]], [lam_big, lam_small], [1.0, 1.0], names=["four-core", "two-core"])


def sample_trace(horizon: float = 200.0, seed: int = 0) -> List[TraceRecord]:
    """Five job shapes with exponential durations, jitter below the default grouping tolerance"""
    return generate_synthetic_trace(
        TRACE_SHAPES["demands"],
        TRACE_SHAPES["arrival_rates"],
        TRACE_SHAPES["mean_durations"],
        horizon=horizon,
        seed=seed,
    )


def get_all_samples() -> Dict[str, Workload]:
    """Every canned workload by name"""
    return {
        "example_system": example_system(),
        "vm_instance": vm_instance(),
        "mm1": mm1(),
        "alternating_cores": alternating_cores(),
    }
