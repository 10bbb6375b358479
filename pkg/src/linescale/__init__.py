"""Single-line row/column normalization of nonnegative matrices.

Scaling runs with diagonal bookkeeping, support and K-diagonal analysis,
the decentralized random walk and an entropic optimal transport study.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DomainError,
    Inconclusive,
    InfeasibleError,
    InvariantViolation,
    NumericError,
    ScalingError,
    ScheduleExhausted,
)
from .matrix import Axis, DiagonalAccumulator, NonNegMatrix, ScheduleStep, distances, normalize_step  # noqa: E402
from .engine import Schedule, StopReason, run_scaling, verify_limit_class  # noqa: E402
from .support import KSpec, birkhoff_decompose, has_k_diagonal, has_support, positive_part  # noqa: E402

__all__ = [
    "Axis", "DiagonalAccumulator", "DomainError", "Inconclusive", "InfeasibleError",
    "InvariantViolation", "KSpec", "NonNegMatrix", "NumericError", "ScalingError",
    "Schedule", "ScheduleExhausted", "ScheduleStep", "StopReason", "birkhoff_decompose",
    "distances", "has_k_diagonal", "has_support", "normalize_step", "positive_part",
    "run_scaling", "verify_limit_class",
]
