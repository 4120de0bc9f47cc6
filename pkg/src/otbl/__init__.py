"""Quadratically regularized optimal transport, plan sensitivities and
bilevel transportation identification."""

from .core import (
    DualPotentials,
    IndexPartition,
    IndexSet,
    ProblemData,
    RegParams,
    adjoint_outer,
    characteristic_matrix,
    mask,
    max_prime,
    outer_sum,
    partition_indices,
    pos_part,
    system_matrix,
)
from .errors import (
    CapacityError,
    ConvergenceError,
    DomainError,
    InfeasibleError,
    NondifferentiableError,
    OTBLError,
)
from .kernels import active_backend, available_backends, use_backend

__version__ = "0.1.0"

__all__ = [
    "CapacityError",
    "ConvergenceError",
    "DomainError",
    "DualPotentials",
    "IndexPartition",
    "IndexSet",
    "InfeasibleError",
    "NondifferentiableError",
    "OTBLError",
    "ProblemData",
    "RegParams",
    "active_backend",
    "adjoint_outer",
    "available_backends",
    "characteristic_matrix",
    "mask",
    "max_prime",
    "outer_sum",
    "partition_indices",
    "pos_part",
    "system_matrix",
    "use_backend",
]
