"""Oracle-tree commitments over quantum data, the succinct argument on top
of them, and the attack harnesses that probe both."""

__version__ = "0.1.0"

from .errors import (
    LabelError,
    ProtocolViolationError,
    QmtreeError,
    ResourceLimitError,
    ValidationError,
)
from .qstate import DensityMatrix, QuantumSystem, fidelity, trace_distance

__all__ = [
    "DensityMatrix",
    "LabelError",
    "ProtocolViolationError",
    "QmtreeError",
    "QuantumSystem",
    "ResourceLimitError",
    "ValidationError",
    "fidelity",
    "trace_distance",
    "__version__",
]
