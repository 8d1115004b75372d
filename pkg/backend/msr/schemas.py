"""
Request / document models
Pydantic shapes for workload, policy and run documents shared by the API and the CLI
"""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field

from .model import JobType, ResourceVector, Workload
from .policy import ModulatingProcess, PolicySpec
from .synthesis import SynthesisResult


class JobTypeModel(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    name: Optional[str] = None
    demand: List[float]
    arrival_rate: float = Field(alias='lambda', ge=0.0)
    service_rate: float = Field(alias='mu', gt=0.0)


class WorkloadModel(BaseModel):
    capacity: List[float]
    types: List[JobTypeModel] = Field(min_length=1)

    def to_workload(self) -> Workload:
        return Workload(
            capacity=ResourceVector(tuple(self.capacity)),
            types=tuple(
                JobType(
                    name=t.name or f"type-{i + 1}",
                    demand=ResourceVector(tuple(t.demand)),
                    arrival_rate=t.arrival_rate,
                    service_rate=t.service_rate,
                )
                for i, t in enumerate(self.types)
            ),
        )

    @classmethod
    def from_workload(cls, w: Workload) -> "WorkloadModel":
        return cls.model_validate(w.to_dict())


class PolicySpecModel(BaseModel):
    candidates: List[List[int]]
    pi: List[float]
    alpha: float = Field(default=1.0, gt=0.0)
    gamma: float = Field(default=1.0, gt=0.0)
    mode: str = 'pmsr'

    def to_spec(self) -> PolicySpec:
        return PolicySpec(tuple(tuple(s) for s in self.candidates), tuple(self.pi), self.alpha, self.gamma, self.mode)


class PolicyDocument(BaseModel):
    """What `synth` writes and `analyze` / `simulate` read"""
    synthesis: Dict[str, Any]
    spec: PolicySpecModel
    process: Dict[str, Any]
    alpha_search: Optional[Dict[str, Any]] = None

    @classmethod
    def from_parts(cls, result: SynthesisResult, spec: PolicySpec, mp: ModulatingProcess,
                   alpha_search: Optional[Dict[str, Any]] = None) -> "PolicyDocument":
        return cls(
            synthesis=result.to_dict(),
            spec=PolicySpecModel(
                candidates=[list(s) for s in spec.candidates],
                pi=list(spec.pi),
                alpha=spec.alpha,
                gamma=spec.gamma,
                mode=spec.mode,
            ),
            process=mp.to_dict(),
            alpha_search=alpha_search,
        )

    def modulating_process(self) -> ModulatingProcess:
        return ModulatingProcess.from_dict(self.process)


class SynthesizeRequest(BaseModel):
    workload: WorkloadModel
    mode: str = 'pmsr'
    alpha: Optional[float] = Field(default=None, gt=0.0)
    gamma: float = Field(default=1.0, gt=0.0)
    alpha_grid: Optional[List[float]] = None
    allow_unstable: bool = False


class AnalyzeRequest(BaseModel):
    workload: WorkloadModel
    process: Dict[str, Any]


class SimulateRequest(BaseModel):
    workload: WorkloadModel
    process: Optional[Dict[str, Any]] = None
    baseline: Optional[str] = None
    backfill: bool = False
    horizon: float = Field(default=2_000.0, gt=0.0)
    warmup: float = Field(default=200.0, ge=0.0)
    replications: Optional[int] = Field(default=None, ge=1)
    seed: int = Field(default=0, ge=0)


class SystemLoadRequest(BaseModel):
    workload: WorkloadModel


class SystemLoadResponse(BaseModel):
    rho: float
    num_maximal: int
    maximal_schedules: List[List[int]]


class RunManifest(BaseModel):
    """Written next to every CLI output as <output>.manifest.json"""
    command: str
    config: Dict[str, Any]
    seed: Optional[int] = None
    version: str
    outputs: List[str]
