#!/usr/bin/env python3
"""
Simulation comparisons between the MSR families, the queue-length bounds and backfilling.
Short horizons with fixed seeds; every comparison leaves room for three confidence widths.
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from msr.analysis import analyze
from msr.model import ResourceVector, system_load
from msr.simulator import SimConfig, simulate_msr
from msr.synthesis import synthesize_policy
from msr.trace import fit_workload, group_types
from sample_data import example_system, sample_trace

LOG_GRID = list(np.logspace(-2, 1, 13))
ALPHA_GRID = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]


def _config(seed, horizon=3_000.0):
    return SimConfig(horizon=horizon, warmup=horizon / 10.0, seed=seed, replications=3, instability_guard=20_000)


def _slack(*estimates):
    return 3.0 * sum(e.half_width for e in estimates)


@pytest.mark.parametrize("rho", [0.5, 0.8, 0.9])
@pytest.mark.parametrize("mode,gamma", [('nmsr', 1.0), ('smsr', 1.0), ('smsr', 10.0)])
def test_simulation_within_bounds(mode, gamma, rho):
    w = example_system(rho)
    _, _, mp, search = synthesize_policy(w, mode, gamma=gamma, alpha_grid=LOG_GRID)
    assert search is not None
    analysis = analyze(mp, w)
    report = simulate_msr(w, mp, _config(seed=31))
    assert not report.unstable
    for t, q in zip(analysis.types, report.queue_length):
        slack = 3.0 * q.half_width + 0.1
        assert t.lower - slack <= q.mean <= t.upper + slack, (t.name, t.lower, q.mean, t.upper)


def test_pmsr_queue_falls_with_alpha():
    w = example_system(0.9)
    reports = []
    for alpha in ALPHA_GRID:
        _, _, mp, _ = synthesize_policy(w, 'pmsr', alpha=alpha)
        reports.append(simulate_msr(w, mp, _config(seed=21)).total_queue_length)
    for slow, fast in zip(reports, reports[1:]):
        assert fast.mean <= slow.mean + _slack(slow, fast)
    at_two, at_eight = reports[ALPHA_GRID.index(2.0)], reports[ALPHA_GRID.index(8.0)]
    assert abs(at_eight.mean - at_two.mean) <= 0.1 * at_two.mean + _slack(at_two, at_eight)


def test_predicted_alpha_close_to_simulated_best():
    w = example_system(0.8)
    grid = list(np.logspace(-2, 1, 10))
    _, spec, _, search = synthesize_policy(w, 'nmsr', alpha_grid=grid)
    simulated = {}
    for alpha, stable in zip(search.grid, search.stable):
        if stable:
            _, _, mp, _ = synthesize_policy(w, 'nmsr', alpha=alpha)
            simulated[alpha] = simulate_msr(w, mp, _config(seed=41, horizon=2_000.0)).total_queue_length
    assert spec.alpha == search.alpha_star
    chosen = simulated[search.alpha_star]
    best = min(simulated.values(), key=lambda e: e.mean)
    assert chosen.mean <= 1.25 * best.mean + _slack(chosen, best)


def _tuned(w, mode, gamma=1.0):
    _, _, mp, _ = synthesize_policy(w, mode, gamma=gamma, alpha_grid=LOG_GRID)
    return simulate_msr(w, mp, _config(seed=51)).total_queue_length


def test_setup_beats_teardown_when_setups_are_fast():
    w = example_system(0.9)
    gamma = 10.0 * float(w.service_rates.max())
    teardown = _tuned(w, 'nmsr')
    setup = _tuned(w, 'smsr', gamma=gamma)
    assert setup.mean <= teardown.mean + _slack(setup, teardown)

    preemptive = _tuned(w, 'pmsr')
    instant = _tuned(w, 'smsr', gamma=100.0)
    assert abs(instant.mean - preemptive.mean) <= 0.15 * preemptive.mean + _slack(instant, preemptive)


def test_backfilling_halves_response_time_on_trace_workload():
    tt = group_types(sample_trace(horizon=2_000.0))
    fitted = fit_workload(tt, ResourceVector((1.0, 1.0)))
    w = fitted.scaled(0.8 / system_load(fitted))
    _, _, mp, _ = synthesize_policy(w, 'nmsr', alpha_grid=LOG_GRID)
    cfg = _config(seed=61, horizon=1_500.0)
    plain = simulate_msr(w, mp, cfg)
    filled = simulate_msr(w, mp, cfg, backfill=True)
    assert filled.policy == 'nmsr+backfill'
    assert filled.extras['backfill_preemptions'] == 0

    unused = sum(plain.unused_events) / max(sum(plain.potential_events), 1)
    if unused <= 0.2:
        pytest.skip(f"only {unused:.3f} of the slot capacity went unused")
    slack = _slack(plain.mean_response_time, filled.mean_response_time)
    assert 2.0 * filled.mean_response_time.mean <= plain.mean_response_time.mean + slack


if __name__ == "__main__":
    print("=" * 60)
    print("MSR POLICY COMPARISONS - TEST SUITE")
    print("=" * 60)
    w = example_system(0.9)
    for mode in ('pmsr', 'nmsr', 'smsr'):
        q = _tuned(w, mode, gamma=10.0)
        print(f"  {mode}: E[Q] = {q.mean:.3f} +/- {q.half_width:.3f}")
    sys.exit(pytest.main([__file__, "-q"]))
