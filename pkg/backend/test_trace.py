#!/usr/bin/env python3
"""
Tests for trace parsing, type grouping, downsampling and workload fitting
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.abspath(__file__)))

import numpy as np
import pytest

from msr.errors import InvalidInputError, TraceParseError
from msr.model import ResourceVector
from msr.trace import (
    TraceRecord,
    downsample,
    fit_workload,
    group_types,
    parse_trace,
    typed_trace_summary,
    write_trace,
)
from sample_data import TRACE_SHAPES, sample_trace


def _write(tmp_path, text, name="trace.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_parse_sorts_and_ignores_extra_columns(tmp_path):
    path = _write(tmp_path, (
        "job_id,arrival_time,cpu,mem,duration,priority\n"
        "b,5.0,0.25,0.1,2.0,9\n"
        "a,1.5,0.5,0.125,1.0,0\n"
    ))
    records = parse_trace(path)
    assert [r.arrival_time for r in records] == [1.5, 5.0]
    assert records[0].demand == (0.5, 0.125)
    assert records[1].duration == 2.0


def test_parse_errors_carry_line_numbers(tmp_path):
    with pytest.raises(TraceParseError) as info:
        parse_trace(_write(tmp_path, "arrival_time,cpu,duration\n1,0.5,1\n"))
    assert info.value.line == 1

    with pytest.raises(TraceParseError) as info:
        parse_trace(_write(tmp_path, "arrival_time,cpu,mem,duration\n1,0.5,0.5,1\n2,abc,0.5,1\n"))
    assert info.value.line == 3

    with pytest.raises(TraceParseError) as info:
        parse_trace(_write(tmp_path, "arrival_time,cpu,mem,duration\n1,0.5,0.5,0\n"))
    assert info.value.line == 2

    with pytest.raises(TraceParseError):
        parse_trace(_write(tmp_path, "arrival_time,cpu,mem,duration\n1,-0.5,0.5,1\n"))


def test_parse_rejects_undecodable_bytes(tmp_path):
    path = tmp_path / "binary.csv"
    path.write_bytes(b"arrival_time,cpu,mem,duration\n\xff\xfe,0.5,0.5,1\n")
    with pytest.raises(TraceParseError, match="not UTF-8"):
        parse_trace(path)


def test_write_then_parse(tmp_path):
    records = sample_trace(horizon=20.0, seed=3)
    path = tmp_path / "out.csv"
    write_trace(records, path)
    assert parse_trace(path) == records


def test_grouping_by_relative_tolerance():
    records = [
        TraceRecord(0.0, 0.5, 0.2, 1.0),
        TraceRecord(1.0, 0.5002, 0.2001, 1.0),   # within 0.1% of the first
        TraceRecord(2.0, 0.25, 0.1, 1.0),
        TraceRecord(3.0, 0.502, 0.2, 1.0),       # 0.4% away: a new type
        TraceRecord(4.0, 0.25, 0.1, 1.0),
        TraceRecord(5.0, 0.25, 0.1, 1.0),
    ]
    tt = group_types(records)
    assert tt.demands == ((0.5, 0.2), (0.25, 0.1), (0.502, 0.2))
    assert tt.counts() == [2, 3, 1]
    assert tt.assignment == (0, 0, 1, 2, 1, 1)

    top = group_types(records, top_n=2)
    # the survivors keep first-seen order
    assert top.demands == ((0.5, 0.2), (0.25, 0.1))
    assert len(top.records) == 5
    assert top.arrivals()[:3] == [(0.0, 0), (1.0, 0), (2.0, 1)]

    with pytest.raises(InvalidInputError):
        group_types(records, tolerance=0.0)
    with pytest.raises(InvalidInputError):
        group_types(records, top_n=0)


def test_sample_trace_groups_into_shapes():
    tt = group_types(sample_trace(horizon=200.0))
    assert tt.num_types == len(TRACE_SHAPES["demands"])
    shapes = np.array(TRACE_SHAPES["demands"])
    for cpu, mem in tt.demands:
        nearest = np.min(np.max(np.abs(shapes - (cpu, mem)) / shapes, axis=1))
        assert nearest < 0.001


def test_downsample():
    tt = group_types(sample_trace(horizon=200.0))
    assert downsample(tt, 1.0) == tt
    half = downsample(tt, 0.5, seed=1)
    assert 0.4 * len(tt.records) < len(half.records) < 0.6 * len(tt.records)
    assert half.demands == tt.demands
    assert downsample(tt, 0.5, seed=1) == half
    with pytest.raises(InvalidInputError):
        downsample(tt, 0.0)
    with pytest.raises(InvalidInputError):
        downsample(tt, 1.5)


def test_fit_recovers_rates():
    tt = group_types(sample_trace(horizon=2000.0))
    w = fit_workload(tt, ResourceVector((1.0, 1.0)))
    shapes = np.array(TRACE_SHAPES["demands"])
    for jt in w.types:
        k = int(np.argmin(np.abs(shapes - np.array(jt.demand.amounts)).sum(axis=1)))
        assert jt.arrival_rate == pytest.approx(TRACE_SHAPES["arrival_rates"][k], rel=0.2)
        assert jt.service_rate == pytest.approx(1.0 / TRACE_SHAPES["mean_durations"][k], rel=0.2)


def test_fit_validation():
    tt = group_types(sample_trace(horizon=200.0))
    with pytest.raises(InvalidInputError):
        fit_workload(tt, ResourceVector((1.0, 1.0, 1.0)))
    lone = group_types([TraceRecord(0.0, 0.5, 0.5, 1.0), TraceRecord(1.0, 0.25, 0.25, 1.0),
                        TraceRecord(2.0, 0.25, 0.25, 1.0)])
    with pytest.raises(InvalidInputError):
        fit_workload(lone, ResourceVector((1.0, 1.0)))


def test_summary():
    tt = group_types(sample_trace(horizon=200.0))
    summary = typed_trace_summary(tt)
    assert summary['records'] == len(tt.records)
    assert sum(t['count'] for t in summary['types']) == len(tt.records)
    assert all(t['lambda_hat'] > 0 for t in summary['types'])


if __name__ == "__main__":
    print("=" * 60)
    print("MSR TRACE INGESTION - TEST SUITE")
    print("=" * 60)
    tt = group_types(sample_trace(horizon=500.0))
    for t in typed_trace_summary(tt)['types']:
        print(f"  type {t['type']}: demand {t['demand']}, count {t['count']}")
    sys.exit(pytest.main([__file__, "-q"]))
