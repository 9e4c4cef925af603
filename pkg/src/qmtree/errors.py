"""Exception types shared across the package."""


class QmtreeError(Exception):
    """Base class for all package errors."""


class ResourceLimitError(QmtreeError):
    """A configured cap (qubit count, dense-matrix size) would be exceeded."""


class ValidationError(QmtreeError):
    """Malformed input: non-unitary matrix, out-of-range effect, bad instance."""


class LabelError(QmtreeError):
    """Dead, duplicate, or unknown qubit labels, or wrong register arity."""


class ProtocolViolationError(QmtreeError):
    """A party acted on registers it does not own."""
