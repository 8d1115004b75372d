"""
Markovian Service Rate scheduling
Synthesizes, analyzes and simulates MSR policies for multiresource jobs on one server
"""

__version__ = "0.1.0"

from .analysis import AnalysisReport, analyze, queue_approx, queue_bounds, relative_completions
from .errors import (
    InfeasibleWorkloadError,
    InvalidInputError,
    MSRError,
    TraceParseError,
    UnservableTypeError,
    UnstableTypeError,
)
from .model import Workload, enumerate_maximal_schedules, feasible, load_workload, make_workload, system_load
from .policy import ModulatingProcess, PolicySpec, build_nmsr, build_pmsr, build_process, build_smsr
from .simulator import SimConfig, SimReport, simulate_baseline, simulate_msr, simulate_msr1
from .synthesis import SynthesisResult, predict_alpha_star, synthesize, synthesize_policy

__all__ = [
    'AnalysisReport',
    'InfeasibleWorkloadError',
    'InvalidInputError',
    'MSRError',
    'ModulatingProcess',
    'PolicySpec',
    'SimConfig',
    'SimReport',
    'SynthesisResult',
    'TraceParseError',
    'UnservableTypeError',
    'UnstableTypeError',
    'Workload',
    'analyze',
    'build_nmsr',
    'build_pmsr',
    'build_process',
    'build_smsr',
    'enumerate_maximal_schedules',
    'feasible',
    'load_workload',
    'make_workload',
    'predict_alpha_star',
    'queue_approx',
    'queue_bounds',
    'relative_completions',
    'simulate_baseline',
    'simulate_msr',
    'simulate_msr1',
    'synthesize',
    'synthesize_policy',
    'system_load',
]
