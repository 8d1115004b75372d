"""
Command-line entry point
synth, analyze, simulate, sweep and trace prep|sim; every output file gets a
<output>.manifest.json next to it.
"""

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from msr import __version__
from msr.analysis import analyze
from msr.config import get_settings
from msr.errors import (
    InfeasibleWorkloadError,
    InvalidInputError,
    MSRError,
    ResourceLimitError,
    TraceParseError,
    TypeNeverServedError,
    UnstableTypeError,
)
from msr.model import ResourceVector, Workload, load_workload
from msr.policy import MODES, ModulatingProcess, build_process
from msr.schemas import PolicyDocument, RunManifest
from msr.simulator import BASELINES, SimConfig, SimReport, replication_rng, simulate_baseline, simulate_msr
from msr.synthesis import predict_alpha_star, synthesize, synthesize_policy
from msr.trace import TypedTrace, downsample, fit_workload, group_types, parse_trace, typed_trace_summary

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ANALYTIC = 3
EXIT_SIM_UNSTABLE = 4

SWEEP_DIMENSIONS = ('load', 'alpha', 'gamma')


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(',') if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")


def _name_list(text: str) -> List[str]:
    return [x.strip() for x in text.split(',') if x.strip()]


def _clean(value: Any) -> Any:
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats become null"""
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def _dump(document: Any) -> str:
    return json.dumps(_clean(document), sort_keys=True, indent=2) + "\n"


def _read_json(path: str) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            return json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise InvalidInputError(f"{path}: invalid JSON ({e})") from e


def _command_name(args: argparse.Namespace) -> str:
    sub = getattr(args, 'trace_command', None)
    return f"{args.command} {sub}" if sub else args.command


def _write_manifest(args: argparse.Namespace, outputs: Sequence[str]) -> None:
    config = {k: v for k, v in vars(args).items() if k != 'func'}
    manifest = RunManifest(
        command=_command_name(args),
        config=_clean(config),
        seed=getattr(args, 'seed', None),
        version=__version__,
        outputs=list(outputs),
    )
    Path(f"{outputs[0]}.manifest.json").write_text(_dump(manifest.model_dump()))


def _emit(text: str, args: argparse.Namespace, extra_outputs: Sequence[str] = ()) -> None:
    if args.output is None:
        sys.stdout.write(text)
        return
    Path(args.output).write_text(text)
    _write_manifest(args, [args.output, *extra_outputs])
    logger.info(f"Wrote {args.output}")


def _load_process(path: str) -> ModulatingProcess:
    """Accepts a full policy document or a bare serialized process"""
    data = _read_json(path)
    if 'process' in data:
        return PolicyDocument.model_validate(data).modulating_process()
    return ModulatingProcess.from_dict(data)


def _sim_config(args: argparse.Namespace, seed: Optional[int] = None, **overrides) -> SimConfig:
    values = dict(
        horizon=args.horizon,
        warmup=args.warmup,
        seed=args.seed if seed is None else seed,
        replications=args.reps,
        instability_guard=args.guard,
        event_log=getattr(args, 'event_log', None),
    )
    values.update(overrides)
    return SimConfig(**values)


def cmd_synth(args: argparse.Namespace) -> int:
    w = load_workload(args.workload)
    result, spec, mp, search = synthesize_policy(w, args.mode, args.alpha, args.gamma, args.alpha_grid)
    document = PolicyDocument.from_parts(result, spec, mp, search.to_dict() if search else None)
    _emit(_dump(document.model_dump()), args)
    if not result.feasible and not args.allow_unstable:
        logger.error(f"rho_max={result.rho_max:.6g} is not below 1; pass --allow-unstable to accept")
        return EXIT_ANALYTIC
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    w = load_workload(args.workload)
    mp = _load_process(args.policy)
    mp.check_feasible(w)
    report = analyze(mp, w)
    _emit(_dump(report.to_dict()), args)
    if not report.stable:
        logger.error(f"Unstable type(s) {report.unstable_types}")
        return EXIT_ANALYTIC
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    w = load_workload(args.workload)
    cfg = _sim_config(args)
    if args.policy in BASELINES:
        if args.backfill:
            logger.warning("BackFilling applies to MSR policies only; ignored")
        report = simulate_baseline(args.policy, w, cfg)
    else:
        report = simulate_msr(w, _load_process(args.policy), cfg, backfill=args.backfill)
    _emit(_dump(report.to_dict()), args, [args.event_log] if args.event_log else [])
    if report.unstable:
        logger.error("Instability guard tripped")
        return EXIT_SIM_UNSTABLE
    return EXIT_OK


def _sweep_columns(K: int) -> List[str]:
    columns = [
        'grid_value', 'policy', 'status', 'rho_max', 'alpha',
        'lower', 'approx', 'upper', 'predicted_response_time',
        'sim_queue_length', 'sim_queue_length_ci', 'sim_response_time', 'sim_response_time_ci',
    ]
    for i in range(1, K + 1):
        columns += [f"q{i}_sim", f"q{i}_ci", f"q{i}_lower", f"q{i}_approx", f"q{i}_upper", f"q{i}_unused_fraction"]
    return columns


def _row_seed(seed: int, grid_index: int, policy_index: int) -> int:
    """Independent seed per sweep point, split off the run seed"""
    return int(replication_rng(seed, grid_index, policy_index).integers(0, 2 ** 63 - 1))


def _sweep_row(base: Workload, value: float, policy: str, args: argparse.Namespace, seed: int) -> Dict[str, Any]:
    w = base.scaled(value) if args.dimension == 'load' else base
    row: Dict[str, Any] = {'grid_value': value, 'policy': policy}
    result = synthesize(w)
    row['rho_max'] = result.rho_max
    if not result.feasible:
        row['status'] = 'unstable'
        return row

    if policy not in BASELINES:
        alpha = value if args.dimension == 'alpha' else args.alpha
        gamma = value if args.dimension == 'gamma' else args.gamma
        spec = result.to_spec(policy, alpha=alpha if alpha is not None else 1.0, gamma=gamma)
        if alpha is None and args.alpha_grid:
            spec = spec.with_alpha(predict_alpha_star(w, spec, args.alpha_grid).alpha_star)
        row['alpha'] = spec.alpha
        mp = build_process(spec, w)
        report = analyze(mp, w)
        for t in report.types:
            row[f"q{t.type_index + 1}_lower"] = t.lower
            row[f"q{t.type_index + 1}_approx"] = t.approx
            row[f"q{t.type_index + 1}_upper"] = t.upper
        if not report.stable:
            row['status'] = 'unstable'
            return row
        row.update(lower=report.total_lower, approx=report.total_queue_length, upper=report.total_upper,
                   predicted_response_time=report.mean_response_time)

    if not args.analytic_only:
        cfg = _sim_config(args, seed=seed, event_log=None)
        if policy in BASELINES:
            sim: SimReport = simulate_baseline(policy, w, cfg)
        else:
            sim = simulate_msr(w, mp, cfg, backfill=args.backfill)
        row.update(
            sim_queue_length=sim.total_queue_length.mean,
            sim_queue_length_ci=sim.total_queue_length.half_width,
            sim_response_time=sim.mean_response_time.mean,
            sim_response_time_ci=sim.mean_response_time.half_width,
        )
        for i, (q, unused) in enumerate(zip(sim.queue_length, sim.unused_fraction), start=1):
            row[f"q{i}_sim"] = q.mean
            row[f"q{i}_ci"] = q.half_width
            row[f"q{i}_unused_fraction"] = unused
        if sim.unstable:
            row['status'] = 'sim_unstable'
            return row
    row['status'] = 'ok'
    return row


def _format_cell(value: Any, digits: int) -> str:
    if value is None:
        return ''
    if isinstance(value, (bool, str)):
        return str(value)
    value = float(value)
    if not math.isfinite(value):
        return ''
    return f"{value:.{digits}g}"


def cmd_sweep(args: argparse.Namespace) -> int:
    grid = args.grid
    if not grid or any(g <= 0 for g in grid) or any(b < a for a, b in zip(grid, grid[1:])):
        raise InvalidInputError(f"grid must be non-empty, positive and sorted, got {grid}")
    unknown = [p for p in args.policies if p not in MODES and p not in BASELINES]
    if unknown:
        raise InvalidInputError(f"unknown policies {unknown}; choose from {MODES + BASELINES}")

    base = load_workload(args.workload)
    digits = get_settings().csv_digits
    columns = _sweep_columns(base.num_types)
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    succeeded = 0
    for g_index, value in enumerate(grid):
        for p_index, policy in enumerate(args.policies):
            try:
                row = _sweep_row(base, value, policy, args, _row_seed(args.seed, g_index, p_index))
            except MSRError as e:
                logger.warning(f"Sweep row {args.dimension}={value:g}, {policy} failed: {e}")
                row = {'grid_value': value, 'policy': policy, 'status': f"error: {e}"}
            succeeded += row['status'] == 'ok'
            writer.writerow({c: _format_cell(row.get(c), digits) for c in columns})
    _emit(buffer.getvalue(), args)
    logger.info(f"Sweep finished: {succeeded} of {len(grid) * len(args.policies)} rows ok")
    return EXIT_OK if succeeded else EXIT_ANALYTIC


def _typed_trace(args: argparse.Namespace) -> TypedTrace:
    tt = group_types(parse_trace(args.trace), tolerance=args.tolerance, top_n=args.top_n)
    if args.keep < 1.0:
        tt = downsample(tt, args.keep, args.seed)
    return tt


def cmd_trace_prep(args: argparse.Namespace) -> int:
    tt = _typed_trace(args)
    document = {
        'summary': typed_trace_summary(tt),
        'workload': fit_workload(tt, ResourceVector(tuple(args.capacity))).to_dict(),
    }
    _emit(_dump(document), args)
    return EXIT_OK


def cmd_trace_sim(args: argparse.Namespace) -> int:
    tt = _typed_trace(args)
    w = fit_workload(tt, ResourceVector(tuple(args.capacity)))
    arrivals = tt.arrivals()
    horizon = args.horizon if args.horizon is not None else tt.timespan()
    warmup = args.warmup if args.warmup is not None else 0.1 * horizon
    cfg = _sim_config(args, horizon=horizon, warmup=warmup, arrivals='trace')

    document: Dict[str, Any] = {'workload': w.to_dict()}
    if args.policy in BASELINES:
        report = simulate_baseline(args.policy, w, cfg, trace_arrivals=arrivals)
    else:
        result, spec, mp, search = synthesize_policy(w, args.policy, args.alpha, args.gamma, args.alpha_grid)
        document['synthesis'] = result.to_dict()
        document['alpha'] = spec.alpha
        report = simulate_msr(w, mp, cfg, backfill=args.backfill, trace_arrivals=arrivals)
    document['simulation'] = report.to_dict()
    _emit(_dump(document), args, [args.event_log] if args.event_log else [])
    if report.unstable:
        logger.error("Instability guard tripped")
        return EXIT_SIM_UNSTABLE
    return EXIT_OK


def _add_policy_options(p: argparse.ArgumentParser) -> None:
    p.add_argument('--alpha', type=float, default=None, help="switching rate (default 1, or alpha* with --alpha-grid)")
    p.add_argument('--gamma', type=float, default=1.0, help="setup rate for smsr")
    p.add_argument('--alpha-grid', type=_float_list, default=None, help="comma-separated alphas to pick alpha* from")


def _add_sim_options(p: argparse.ArgumentParser, horizon: Optional[float] = 10_000.0,
                     warmup: Optional[float] = 1_000.0) -> None:
    p.add_argument('--horizon', type=float, default=horizon)
    p.add_argument('--warmup', type=float, default=warmup)
    p.add_argument('--reps', type=int, default=None, help="replications (default MSR_DEFAULT_REPLICATIONS)")
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--guard', type=int, default=None, help="jobs in system that flag instability")
    p.add_argument('--backfill', action='store_true', help="fill leftover capacity First-Fit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='msr', description="Markovian Service Rate scheduling toolkit")
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest='command', required=True)

    p = commands.add_parser('synth', help="synthesize a policy for a workload")
    p.add_argument('workload')
    p.add_argument('--mode', choices=MODES, default='pmsr')
    _add_policy_options(p)
    p.add_argument('--allow-unstable', action='store_true')
    p.add_argument('-o', '--output')
    p.set_defaults(func=cmd_synth)

    p = commands.add_parser('analyze', help="queue-length bounds and approximation for a policy")
    p.add_argument('policy')
    p.add_argument('workload')
    p.add_argument('-o', '--output')
    p.set_defaults(func=cmd_analyze)

    p = commands.add_parser('simulate', help="simulate a policy file or a baseline")
    p.add_argument('policy', help=f"policy.json or one of {', '.join(BASELINES)}")
    p.add_argument('workload')
    _add_sim_options(p)
    p.add_argument('--event-log', default=None, help="CSV of every event")
    p.add_argument('-o', '--output')
    p.set_defaults(func=cmd_simulate)

    p = commands.add_parser('sweep', help="analysis and simulation over a parameter grid")
    p.add_argument('workload')
    p.add_argument('--dimension', choices=SWEEP_DIMENSIONS, required=True)
    p.add_argument('--grid', type=_float_list, required=True)
    p.add_argument('--policies', type=_name_list, default=['pmsr'])
    _add_policy_options(p)
    _add_sim_options(p)
    p.add_argument('--analytic-only', action='store_true')
    p.add_argument('-o', '--output')
    p.set_defaults(func=cmd_sweep)

    p = commands.add_parser('trace', help="trace preparation and replay")
    trace_commands = p.add_subparsers(dest='trace_command', required=True)
    for name, func in (('prep', cmd_trace_prep), ('sim', cmd_trace_sim)):
        t = trace_commands.add_parser(name)
        t.add_argument('trace')
        t.add_argument('--tolerance', type=float, default=0.001)
        t.add_argument('--top-n', type=int, default=10)
        t.add_argument('--keep', type=float, default=1.0, help="fraction of records kept")
        t.add_argument('--capacity', type=_float_list, default=[1.0, 1.0], help="cpu,mem capacity")
        t.add_argument('-o', '--output')
        if name == 'sim':
            t.add_argument('--policy', default='pmsr', help=f"one of {', '.join(MODES + BASELINES)}")
            _add_policy_options(t)
            _add_sim_options(t, horizon=None, warmup=None)
            t.add_argument('--event-log', default=None)
        else:
            t.add_argument('--seed', type=int, default=0)
        t.set_defaults(func=func)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=get_settings().log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InvalidInputError, TraceParseError, ResourceLimitError, ValidationError, OSError) as e:
        logger.error(f"Input error: {e}")
        return EXIT_INPUT
    except (InfeasibleWorkloadError, UnstableTypeError, TypeNeverServedError) as e:
        logger.error(f"Infeasible: {e}")
        return EXIT_ANALYTIC
    except MSRError as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_ANALYTIC


if __name__ == "__main__":
    sys.exit(main())
