#!/usr/bin/env python3
"""
Tests for the discrete-event simulator and the Monte Carlo helpers
"""

import csv
import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest
from scipy import stats

from msr.analysis import analyze, mmk_mean_number, relative_completions
from msr.errors import InvalidInputError
from msr.policy import WORKING, ModulatingProcess, PolicySpec, ProcessState, build_nmsr, build_pmsr, constant_process
from msr.simulator import (
    SimConfig,
    confidence_interval,
    estimate_relative_completions,
    maxweight_choice,
    replication_rng,
    saturated_throughput,
    simulate_baseline,
    simulate_firstfit,
    simulate_maxweight,
    simulate_msr,
    simulate_msr1,
    _MSRRun,
)
from msr.synthesis import synthesize_policy
from sample_data import alternating_cores, example_system, mm1, mmk

LOG_GRID = list(np.logspace(-2, 1, 13))
ALTERNATING = PolicySpec(candidates=((2, 0), (0, 4)), pi=(2.0 / 3.0, 1.0 / 3.0), alpha=1.0)


def test_replication_rng():
    a = replication_rng(3, 1).random(4)
    b = replication_rng(3, 1).random(4)
    c = replication_rng(3, 2).random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    with pytest.raises(InvalidInputError):
        replication_rng(-1)


def test_confidence_interval():
    samples = [1.0, 2.0, 3.0, 4.0]
    est = confidence_interval(samples, 0.95)
    expected = stats.t.ppf(0.975, 3) * np.std(samples, ddof=1) / 2.0
    assert est.mean == pytest.approx(2.5)
    assert est.half_width == pytest.approx(expected)
    assert est.within(2.5 + 0.99 * expected)
    assert not est.within(2.5 + 2 * expected)
    single = confidence_interval([5.0])
    assert single.mean == 5.0
    assert single.to_dict()['ci'] is None


def test_sim_config_validation():
    with pytest.raises(InvalidInputError):
        SimConfig(horizon=0.0)
    with pytest.raises(InvalidInputError):
        SimConfig(horizon=100.0, warmup=100.0)
    with pytest.raises(InvalidInputError):
        SimConfig(arrivals='replay')
    with pytest.raises(InvalidInputError):
        SimConfig(replications=0)
    assert SimConfig(replications=3).to_dict()['replications'] == 3


def test_maxweight_choice_ties():
    U = np.array([[0, 2], [1, 1], [2, 0]])
    assert maxweight_choice(U, [1.0, 1.0]) == 0
    assert maxweight_choice(U, [3.0, 1.0]) == 2


def test_mm1_queue_length():
    cfg = SimConfig(horizon=20_000.0, warmup=1_000.0, seed=11, replications=5)
    report = simulate_msr(mm1(0.5), constant_process((1,)), cfg)
    assert not report.unstable
    assert report.total_queue_length.within(1.0, widths=3.0, slack=0.05)
    assert report.mean_response_time.within(2.0, widths=3.0, slack=0.1)
    # a lone slot is idle half the time
    assert report.unused_fraction[0] == pytest.approx(0.5, abs=0.02)


def test_maxweight_on_mm1():
    cfg = SimConfig(horizon=20_000.0, warmup=1_000.0, seed=5, replications=5)
    report = simulate_maxweight(mm1(0.5), cfg)
    assert report.total_queue_length.within(1.0, widths=3.0, slack=0.05)
    assert report.extras['schedule_share'] == {'1': pytest.approx(1.0)}


def test_runs_are_deterministic():
    w = example_system(0.8)
    _, _, mp, _ = synthesize_policy(w, 'pmsr', alpha=2.0)
    cfg = SimConfig(horizon=500.0, warmup=50.0, seed=42, replications=2)
    first = simulate_msr(w, mp, cfg).to_dict()
    again = simulate_msr(w, mp, cfg).to_dict()
    other = simulate_msr(w, mp, SimConfig(horizon=500.0, warmup=50.0, seed=43, replications=2)).to_dict()
    assert first == again
    assert first != other


def test_bounds_sandwich_simulation():
    w = example_system(0.8)
    _, _, mp, _ = synthesize_policy(w, 'pmsr', alpha=2.0)
    analysis = analyze(mp, w)
    cfg = SimConfig(horizon=4_000.0, warmup=400.0, seed=1, replications=5)
    report = simulate_msr(w, mp, cfg)
    assert not report.unstable
    for t, q in zip(analysis.types, report.queue_length):
        slack = 3.0 * q.half_width + 0.05
        assert t.lower - slack <= q.mean <= t.upper + slack, t.name


def test_msr1_coupling():
    w = example_system(0.8)
    _, _, mp, _ = synthesize_policy(w, 'pmsr', alpha=2.0)
    cfg = SimConfig(horizon=4_000.0, warmup=400.0, seed=2, replications=5)
    full = simulate_msr(w, mp, cfg)
    for i, jt in enumerate(w.types):
        single = simulate_msr1(mp, i, jt.arrival_rate, jt.service_rate, cfg)
        q1, q = single.total_queue_length, full.queue_length[i]
        slack = 3.0 * (q1.half_width + q.half_width) + 0.05
        beta = int(np.max(mp.schedules[:, i]))
        # MSR-1 serves whenever any job waits, so it holds at most beta fewer jobs
        assert q1.mean <= q.mean + slack
        assert q.mean <= q1.mean + beta + slack
        identity = single.extras['unused_identity']
        assert identity == pytest.approx(q1.mean, rel=0.15, abs=3.0 * q1.half_width + 0.1)


def test_msr1_rejects_bad_rates():
    with pytest.raises(InvalidInputError):
        simulate_msr1(constant_process((1,)), 0, 0.0, 1.0, SimConfig())


def test_stability_at_high_load():
    w = example_system(0.95)
    tripped = simulate_firstfit(w, SimConfig(horizon=20_000.0, warmup=1_000.0, seed=3, replications=1,
                                             instability_guard=200))
    assert tripped.unstable
    assert tripped.to_dict()['unstable'] is True

    cfg = SimConfig(horizon=5_000.0, warmup=500.0, seed=3, replications=2, instability_guard=5_000)
    for mode in ('pmsr', 'nmsr'):
        _, _, mp, _ = synthesize_policy(w, mode, alpha_grid=LOG_GRID)
        report = simulate_msr(w, mp, cfg)
        assert not report.unstable, mode
        assert np.isfinite(report.total_queue_length.half_width)
    report = simulate_baseline('maxweight', w, cfg)
    assert not report.unstable
    assert np.isfinite(report.total_queue_length.half_width)


def test_unknown_baseline():
    with pytest.raises(InvalidInputError):
        simulate_baseline('random-timers', mm1(), SimConfig())


def test_backfill_does_not_hurt():
    w = example_system(0.8)
    _, _, mp, _ = synthesize_policy(w, 'pmsr', alpha=2.0)
    cfg = SimConfig(horizon=4_000.0, warmup=400.0, seed=4, replications=5)
    plain = simulate_msr(w, mp, cfg)
    filled = simulate_msr(w, mp, cfg, backfill=True)
    assert filled.policy == 'pmsr+backfill'
    assert sum(filled.backfill_completions) > 0
    slack = 3.0 * (plain.mean_response_time.half_width + filled.mean_response_time.half_width)
    assert filled.mean_response_time.mean <= plain.mean_response_time.mean + slack


def test_nonpreemptive_backfill_runs_clean():
    w = example_system(0.8)
    _, _, mp, _ = synthesize_policy(w, 'nmsr', alpha=0.2)
    report = simulate_msr(w, mp, SimConfig(horizon=1_000.0, warmup=100.0, seed=6, replications=2), backfill=True)
    assert report.policy == 'nmsr+backfill'
    # non-preemptive jobs are never pushed back to the queue
    assert report.preemptions == 0
    assert report.extras['backfill_preemptions'] == 0
    assert report.extras['deferred_transitions'] > 0


def _alternating_run(mp):
    run = _MSRRun(alternating_cores(), mp, SimConfig(horizon=10.0, warmup=0.0), replication_rng(0), backfill=True)
    run.t = 2.0
    return run, [st.label for st in mp.states]


def test_backfilled_job_blocks_slot_until_it_finishes():
    run, labels = _alternating_run(build_nmsr(ALTERNATING, mu=[1.0, 1.0]))
    run.state = labels.index("w_{2,0}")
    # one four-core job in service and one two-core job backfilled: 6 of 8 cores busy
    run.slots[0] = [0.0]
    run.backfilled[1] = [0.5]
    run.queues[0].append(1.0)
    run.queues[1].append(1.5)

    run.fill()
    assert run.slots[0] == [0.0]
    assert list(run.queues[0]) == [1.0]
    # the two free cores stay reserved for the waiting slot
    assert list(run.queues[1]) == [1.5]
    assert run.backfilled[1] == [0.5]

    run.handle('backfill', 1)
    run.fill()
    assert run.slots[0] == [0.0, 1.0]
    assert run.backfilled[1] == []
    assert list(run.queues[1]) == [1.5]
    assert run.stats.backfill_preemptions == 0
    assert np.all(run.footprint() <= run.P)


def test_preemptive_slot_evicts_backfilled_job():
    run, labels = _alternating_run(build_pmsr(ALTERNATING))
    run.state = labels.index("w_{2,0}")
    run.slots[0] = [0.0]
    run.backfilled[1] = [0.5]
    run.queues[0].append(1.0)
    run.queues[1].append(1.5)

    run.fill()
    assert run.slots[0] == [0.0, 1.0]
    assert run.backfilled[1] == []
    assert list(run.queues[1]) == [0.5, 1.5]
    assert run.stats.backfill_preemptions == 1


def test_transition_waits_for_backfilled_jobs():
    run, labels = _alternating_run(build_nmsr(ALTERNATING, mu=[1.0, 1.0]))
    teardown = labels.index("t_{0,1}")
    target = labels.index("w_{2,0}")
    run.state = teardown
    run.backfilled[1] = [0.5]

    # two four-core slots next to a two-core backfilled job need 10 of 8 cores
    run.transition(target)
    assert run.pending == target
    assert run.state == teardown
    assert run.stats.deferred_transitions == 1

    run.queues[0].extend([1.0, 1.1])
    run.fill()
    assert run.slots[0] == []
    assert run.backfilled[0] == []
    assert len(run.queues[0]) == 2

    run.handle('backfill', 1)
    assert run.pending is None
    assert run.state == target
    run.fill()
    assert run.slots[0] == [1.0, 1.1]


def test_backfilled_job_moves_into_target_slot():
    run, labels = _alternating_run(build_nmsr(ALTERNATING, mu=[1.0, 1.0]))
    run.state = labels.index("t_{1,0}")
    run.backfilled[1] = [0.5]
    # the backfilled two-core job takes one of the four slots of the target
    target = labels.index("w_{0,4}")
    run.transition(target)
    assert run.pending is None
    assert run.state == target
    run.fill()
    assert run.slots[1] == [0.5]
    assert run.backfilled[1] == []


class _CheckedRun(_MSRRun):
    """Asserts after every fill that no job is backfilled while a slot of the schedule waits"""

    def fill(self):
        before = int(self.backfilled_counts().sum())
        super().fill()
        limit = self.u[self.state] if self.pending is None else np.minimum(self.u[self.state], self.u[self.pending])
        starved = any(self.queues[i] and len(self.slots[i]) < limit[i] for i in range(self.K))
        if starved or self.pending is not None:
            assert int(self.backfilled_counts().sum()) <= before

    def apply(self, target):
        assert self.fits(target)
        super().apply(target)


@pytest.mark.parametrize("mode", ['nmsr', 'smsr'])
def test_nonpreemptive_backfill_never_evicts(mode):
    w = example_system(0.8)
    _, _, mp, _ = synthesize_policy(w, mode, alpha=0.2, gamma=10.0)
    cfg = SimConfig(horizon=600.0, warmup=60.0, seed=8, replications=1)
    stats = _CheckedRun(w, mp, cfg, replication_rng(8, 0), backfill=True).run()
    assert not stats.unstable
    assert stats.backfill_preemptions == 0
    assert int(stats.backfill_completions.sum()) > 0


def test_firstfit_single_type_is_mmk():
    for k, rho in ((2, 0.6), (4, 0.75)):
        w = mmk(k, k * rho)
        cfg = SimConfig(horizon=20_000.0, warmup=1_000.0, seed=13, replications=5)
        report = simulate_firstfit(w, cfg)
        expected = mmk_mean_number(k, rho)
        assert report.total_queue_length.within(expected, widths=3.0, slack=0.05), (k, rho)
        # a constant k-slot schedule is the same queue
        msr = simulate_msr(w, constant_process((k,)), cfg)
        assert msr.total_queue_length.within(expected, widths=3.0, slack=0.05), (k, rho)


def test_potential_completions_are_used_or_unused():
    w = example_system(0.8)
    for mode in ('pmsr', 'nmsr'):
        _, _, mp, _ = synthesize_policy(w, mode, alpha=0.5)
        report = simulate_msr(w, mp, SimConfig(horizon=800.0, warmup=80.0, seed=17, replications=2))
        for i in range(w.num_types):
            assert report.slot_completions[i] + report.unused_events[i] == report.potential_events[i]
            assert report.slot_completions[i] == report.completions[i]


def test_trace_arrivals():
    cfg = SimConfig(horizon=50.0, warmup=0.0, seed=0, replications=1, arrivals='trace')
    report = simulate_firstfit(mm1(), cfg, trace_arrivals=[(2.0, 0), (1.0, 0)])
    assert report.completions == [2]
    with pytest.raises(InvalidInputError):
        simulate_firstfit(mm1(), cfg)


def test_event_log(tmp_path):
    path = tmp_path / "events.csv"
    cfg = SimConfig(horizon=20.0, warmup=0.0, seed=0, replications=2, event_log=str(path))
    simulate_msr(alternating_cores(), build_pmsr(ALTERNATING), cfg)
    with open(path, newline='') as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ['replication', 'time', 'event', 'type', 'state']
    assert {row[0] for row in rows[1:]} == {'0', '1'}
    assert {row[2] for row in rows[1:]} <= {'arrival', 'potential', 'switch'}


def test_saturated_throughput_alternating_cores():
    w = alternating_cores()
    msr = saturated_throughput(w, build_pmsr(ALTERNATING), horizon=20_000.0, seed=0)
    fcfs = saturated_throughput(w, 'fcfs', horizon=20_000.0, seed=0)
    assert msr == pytest.approx(8.0 / 3.0, abs=0.1)
    assert fcfs <= 2.5
    assert fcfs < msr - 0.15
    with pytest.raises(InvalidInputError):
        saturated_throughput(w, 'lifo', horizon=10.0)


def _random_process(rng, n):
    G = rng.uniform(0.5, 2.0, size=(n, n))
    np.fill_diagonal(G, 0.0)
    G -= np.diag(G.sum(axis=1))
    counts = rng.integers(0, 4, size=n)
    states = tuple(ProcessState((int(c),), WORKING, (0,), None, f"s{j}") for j, c in enumerate(counts))
    return ModulatingProcess(states=states, generator=G, working_index={j: j for j in range(n)})


def test_relative_completions_monte_carlo():
    rng = np.random.default_rng(2024)
    hits, total = 0, 0
    for k in range(50):
        mp = _random_process(rng, int(rng.integers(2, 5)))
        mu = float(rng.uniform(0.5, 2.0))
        exact = relative_completions(mp, 0, mu).values
        means, errors = estimate_relative_completions(mp, mu * mp.schedules[:, 0], horizon=20.0,
                                                      replications=4000, seed=k)
        gap = np.abs(means - exact)
        assert np.all(gap <= 5.0 * errors + 1e-9)
        hits += int(np.sum(gap <= 3.0 * errors + 1e-9))
        total += gap.size
    assert hits >= 0.95 * total


def test_relative_completions_estimator_validation():
    mp = build_pmsr(ALTERNATING)
    with pytest.raises(InvalidInputError):
        estimate_relative_completions(mp, [1.0], horizon=10.0, replications=10)
    with pytest.raises(InvalidInputError):
        estimate_relative_completions(mp, [1.0, 2.0], horizon=10.0, replications=1)
    means, errors = estimate_relative_completions(constant_process((2,)), [2.0], horizon=10.0, replications=10)
    assert means.tolist() == [0.0] and errors.tolist() == [0.0]


if __name__ == "__main__":
    print("=" * 60)
    print("MSR DISCRETE-EVENT SIMULATION - TEST SUITE")
    print("=" * 60)
    w = example_system(0.8)
    _, _, mp, _ = synthesize_policy(w, 'pmsr', alpha=2.0)
    report = simulate_msr(w, mp, SimConfig(horizon=2_000.0, warmup=200.0, replications=3))
    print(f"pMSR E[Q] = {report.total_queue_length.mean:.3f} +/- {report.total_queue_length.half_width:.3f}")
    sys.exit(pytest.main([__file__, "-q"]))
