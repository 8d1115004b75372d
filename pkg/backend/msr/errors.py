"""
MSR Error Types
Exception hierarchy shared by the model, solvers, analysis, simulator and trace tooling
"""

from typing import Optional


class MSRError(Exception):
    """Base class for every error raised by the msr package"""


class InvalidInputError(MSRError, ValueError):
    """Malformed input: dimension mismatch, negative rates, bad parameters"""


class ResourceLimitError(MSRError):
    """A configured cap was exceeded"""

    def __init__(self, message: str, cap: int):
        super().__init__(message)
        self.cap = cap


class InfeasibleWorkloadError(MSRError):
    """The workload cannot be served at any positive throughput"""


class UnservableTypeError(InfeasibleWorkloadError):
    """Some type with positive arrival rate never fits in any schedule"""

    def __init__(self, message: str, type_index: Optional[int] = None):
        super().__init__(message)
        self.type_index = type_index


class SingularSystemError(MSRError):
    """Linear system is singular within pivot tolerance"""


class LPInfeasibleError(MSRError):
    """Linear program has no feasible point"""


class LPUnboundedError(MSRError):
    """Linear program objective is unbounded"""


class ReducibleChainError(MSRError):
    """Generator does not describe an irreducible chain"""


class UnstableTypeError(MSRError):
    """A job type has load rho_i >= 1 under the given policy"""

    def __init__(self, type_index: int, rho: float):
        super().__init__(f"type {type_index} is unstable (rho={rho:.6g})")
        self.type_index = type_index
        self.rho = rho


class TypeNeverServedError(MSRError):
    """A job type has zero average schedule under the given policy"""

    def __init__(self, type_index: int):
        super().__init__(f"type {type_index} is never scheduled by the policy")
        self.type_index = type_index


class TraceParseError(MSRError, ValueError):
    """A trace file could not be parsed"""

    def __init__(self, message: str, line: Optional[int] = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
        self.line = line
