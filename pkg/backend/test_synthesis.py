#!/usr/bin/env python3
"""
Tests for candidate synthesis and switching-rate selection
"""

import math
import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from msr.errors import InvalidInputError, UnservableTypeError
from msr.model import enumerate_maximal_schedules, feasible, make_workload
from msr.policy import build_process
from msr.synthesis import (
    completion_rates,
    is_stable,
    predict_alpha_star,
    reduce_support,
    synthesize,
    synthesize_policy,
)
from sample_data import VM_INSTANCE_PI, VM_INSTANCE_SCHEDULES, example_system, mm1, vm_instance

ALPHA_GRID = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
LOG_GRID = list(np.logspace(-2, 1, 13))


def test_vm_instance_optimum():
    w = vm_instance()
    result = synthesize(w)
    assert result.feasible
    assert result.rho_max == pytest.approx(0.655, abs=1e-6)
    assert max(result.rho_per_type) == pytest.approx(result.rho_max, abs=1e-7)
    assert len(result.candidates) <= w.num_types
    assert sum(result.pi) == pytest.approx(1.0)
    maximal = set(enumerate_maximal_schedules(w))
    for s in result.candidates:
        assert s in maximal


def test_known_mixture_matches_optimum():
    w = vm_instance()
    for s in VM_INSTANCE_SCHEDULES:
        assert feasible(s, w)
    served = np.array(VM_INSTANCE_PI) @ np.array(VM_INSTANCE_SCHEDULES, dtype=float)
    rho = w.arrival_rates / served
    assert np.allclose(rho, rho[0], rtol=1e-6)
    assert rho.max() == pytest.approx(synthesize(w).rho_max, abs=1e-6)


def test_example_system_at_unit_load():
    result = synthesize(example_system())
    assert result.rho_max == pytest.approx(1.0, abs=1e-9)
    assert not result.feasible
    assert result.num_maximal == 7


def test_load_scaling_invariance():
    base = synthesize(example_system())
    for c in (0.5, 0.8, 0.95):
        scaled = synthesize(example_system(c))
        assert scaled.candidates == base.candidates
        assert np.allclose(scaled.pi, base.pi, atol=1e-9)
        assert scaled.rho_max == pytest.approx(c * base.rho_max, abs=1e-9)
        assert scaled.feasible


def test_zero_capacity_is_unservable():
    w = make_workload([0.0, 0.0], [[1.0, 1.0]], [1.0], [1.0])
    with pytest.raises(UnservableTypeError):
        synthesize(w)


def test_needs_positive_arrivals():
    with pytest.raises(InvalidInputError):
        synthesize(make_workload([2.0], [[1.0]], [0.0], [1.0]))


def test_example_system_candidates():
    result = synthesize(example_system(0.9))
    assert result.candidates == ((0, 0, 2), (1, 4, 0))
    assert result.pi == pytest.approx((0.5, 0.5), abs=1e-9)
    assert result.rho_max == pytest.approx(0.9, abs=1e-9)


def test_tied_optima_pick_one_candidate_set():
    # on three cores two equal types balance with (1,2)+(2,1), (0,3)+(3,0) or (0,3)+(2,1)
    w = make_workload([3.0], [[1.0], [1.0]], [1.0, 1.0], [1.0, 1.0])
    schedules = enumerate_maximal_schedules(w)
    assert schedules == [(0, 3), (1, 2), (2, 1), (3, 0)]
    U = np.array(schedules, dtype=float)
    for pair in ([0.0, 0.5, 0.5, 0.0], [0.5, 0.0, 0.0, 0.5]):
        assert np.allclose(np.array(pair) @ U, [1.5, 1.5])

    result = synthesize(w)
    assert result.rho_max == pytest.approx(2.0 / 3.0, abs=1e-9)
    assert result.candidates == ((0, 3), (2, 1))
    assert result.pi == pytest.approx((0.25, 0.75), abs=1e-9)
    assert synthesize(w, schedules=list(reversed(schedules))) == result

    # a single balanced schedule beats every pair that reaches the same load
    even = synthesize(make_workload([4.0], [[1.0], [1.0]], [1.0, 1.0], [1.0, 1.0]))
    assert even.candidates == ((2, 2),)
    assert even.pi == pytest.approx((1.0,))


def test_reduce_support():
    U = np.array([[1.0], [2.0], [3.0]])
    weights = np.full(3, 1.0 / 3.0)
    target = np.array([1.0])
    reduced = reduce_support(U, weights, target, max_support=2)
    assert np.sum(reduced > 1e-12) <= 2
    assert reduced.sum() == pytest.approx(1.0)
    assert np.all(reduced >= 0.0)
    assert np.all(reduced @ U >= target - 1e-9)


def test_stability_check():
    w = example_system(0.9)
    _, _, mp, _ = synthesize_policy(w, 'pmsr', alpha=2.0)
    assert is_stable(mp, w)
    assert np.all(completion_rates(mp, w) > w.arrival_rates)
    assert not is_stable(mp, example_system(1.1))


def test_alpha_search_pmsr():
    w = example_system(0.9)
    spec = synthesize(w).to_spec('pmsr')
    search = predict_alpha_star(w, spec, ALPHA_GRID)
    assert search.alpha_star in ALPHA_GRID
    assert all(search.stable)
    for lo, mid, hi in zip(search.lower, search.predicted, search.upper):
        assert lo - 1e-9 <= mid <= hi + 1e-9
    assert search.predicted[-1] <= search.predicted[0]
    assert search.guaranteed_gap >= 0.0
    if min(search.lower) > 0:
        assert min(search.upper) / min(search.lower) - 1.0 == pytest.approx(search.guaranteed_gap)
    else:
        assert math.isinf(search.guaranteed_gap)


def test_alpha_search_grid_validation():
    w = example_system(0.9)
    spec = synthesize(w).to_spec('pmsr')
    with pytest.raises(InvalidInputError):
        predict_alpha_star(w, spec, [])
    with pytest.raises(InvalidInputError):
        predict_alpha_star(w, spec, [2.0, 1.0])
    with pytest.raises(InvalidInputError):
        predict_alpha_star(w, spec, [0.0, 1.0])


def test_nmsr_fast_switching_is_unstable():
    w = example_system(0.9)
    spec = synthesize(w).to_spec('nmsr', alpha=1000.0)
    assert not is_stable(build_process(spec, w), w)
    search = predict_alpha_star(w, synthesize(w).to_spec('nmsr'), [1e-2, 1e3])
    assert search.stable == [True, False]
    assert search.alpha_star == 1e-2
    assert math.isinf(search.predicted[1])


def _best(w, mode, gamma=1.0):
    spec = synthesize(w).to_spec(mode, gamma=gamma)
    search = predict_alpha_star(w, spec, LOG_GRID)
    return search.predicted[search.grid.index(search.alpha_star)]


def test_setup_rate_ordering():
    w = example_system(0.9)
    pmsr = _best(w, 'pmsr')
    nmsr = _best(w, 'nmsr')
    slow_setup = _best(w, 'smsr', gamma=1.0)
    fast_setup = _best(w, 'smsr', gamma=100.0)
    assert pmsr <= nmsr
    assert pmsr <= fast_setup
    assert fast_setup <= slow_setup
    assert fast_setup <= nmsr


def test_synthesize_policy_modes():
    w = example_system(0.9)
    result, spec, mp, search = synthesize_policy(w, 'pmsr', alpha_grid=ALPHA_GRID)
    assert search is not None
    assert spec.alpha == search.alpha_star
    assert mp.alpha == search.alpha_star

    result, spec, mp, search = synthesize_policy(w, 'smsr', alpha=0.5, gamma=10.0)
    assert search is None
    assert mp.mode == 'smsr'
    assert mp.gamma == 10.0

    result, spec, mp, search = synthesize_policy(mm1(), 'nmsr')
    assert result.candidates == ((1,),)
    assert result.rho_max == pytest.approx(0.5)
    assert mp.num_states == 1


if __name__ == "__main__":
    print("=" * 60)
    print("MSR POLICY SYNTHESIS - TEST SUITE")
    print("=" * 60)
    result = synthesize(vm_instance())
    for s, p in zip(result.candidates, result.pi):
        print(f"  {s}: {p:.8f}")
    print(f"rho_max = {result.rho_max:.8f}")
    sys.exit(pytest.main([__file__, "-q"]))
