"""
HTTP endpoints for policy synthesis, analysis and simulation
"""

import logging
from typing import Any, Dict

from fastapi import APIRouter, HTTPException

from .analysis import analyze
from .errors import (
    InfeasibleWorkloadError,
    InvalidInputError,
    MSRError,
    ResourceLimitError,
    TypeNeverServedError,
    UnstableTypeError,
)
from .model import enumerate_maximal_schedules, system_load
from .policy import ModulatingProcess
from .schemas import (
    AnalyzeRequest,
    PolicyDocument,
    SimulateRequest,
    SynthesizeRequest,
    SystemLoadRequest,
    SystemLoadResponse,
)
from .simulator import SimConfig, simulate_baseline, simulate_msr
from .synthesis import synthesize_policy

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/msr", tags=["msr"])


def _http_error(e: MSRError) -> HTTPException:
    if isinstance(e, (InfeasibleWorkloadError, UnstableTypeError, TypeNeverServedError)):
        status = 422
    elif isinstance(e, (InvalidInputError, ResourceLimitError)):
        status = 400
    else:
        status = 500
    return HTTPException(status_code=status, detail=str(e))


@router.post("/system-load", response_model=SystemLoadResponse)
async def compute_system_load(request: SystemLoadRequest):
    """Smallest rho such that the offered load scaled by 1/rho is schedulable"""
    try:
        w = request.workload.to_workload()
        schedules = enumerate_maximal_schedules(w)
        rho = system_load(w, schedules)
        return SystemLoadResponse(rho=rho, num_maximal=len(schedules), maximal_schedules=[list(s) for s in schedules])
    except MSRError as e:
        logger.error(f"System load error: {e}")
        raise _http_error(e)


@router.post("/synthesize", response_model=PolicyDocument)
async def synthesize_endpoint(request: SynthesizeRequest):
    """Candidate set, time fractions and the modulating process for the requested mode"""
    try:
        w = request.workload.to_workload()
        result, spec, mp, search = synthesize_policy(
            w, request.mode, request.alpha, request.gamma, request.alpha_grid
        )
        if not result.feasible and not request.allow_unstable:
            raise InfeasibleWorkloadError(f"workload load rho_max={result.rho_max:.6g} is not below 1")
        logger.info(f"Synthesized {request.mode} policy with {mp.num_states} states")
        return PolicyDocument.from_parts(result, spec, mp, search.to_dict() if search else None)
    except MSRError as e:
        logger.error(f"Synthesis error: {e}")
        raise _http_error(e)


@router.post("/analyze")
async def analyze_endpoint(request: AnalyzeRequest) -> Dict[str, Any]:
    """Per-type bounds and approximation; 422 when some type is unstable"""
    try:
        w = request.workload.to_workload()
        mp = ModulatingProcess.from_dict(request.process)
        mp.check_feasible(w)
        report = analyze(mp, w)
    except MSRError as e:
        logger.error(f"Analysis error: {e}")
        raise _http_error(e)
    if not report.stable:
        raise HTTPException(status_code=422, detail=report.to_dict())
    return report.to_dict()


@router.post("/simulate")
async def simulate_endpoint(request: SimulateRequest) -> Dict[str, Any]:
    """Simulate a modulating process or a named baseline"""
    try:
        w = request.workload.to_workload()
        cfg = SimConfig(
            horizon=request.horizon,
            warmup=request.warmup,
            seed=request.seed,
            replications=request.replications,
        )
        if request.process is not None:
            report = simulate_msr(w, ModulatingProcess.from_dict(request.process), cfg, backfill=request.backfill)
        elif request.baseline is not None:
            report = simulate_baseline(request.baseline, w, cfg)
        else:
            raise InvalidInputError("give either a process or a baseline name")
        return report.to_dict()
    except MSRError as e:
        logger.error(f"Simulation error: {e}")
        raise _http_error(e)
