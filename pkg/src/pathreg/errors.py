"""Exception types shared across the package."""


class PathRegError(Exception):
    """Base class for all errors raised by pathreg."""


class InvalidArchitectureError(PathRegError, ValueError):
    """Layer specification is empty, too short, or has a non-positive size."""


class CyclicGraphError(PathRegError, ValueError):
    """Edge relation contains a directed cycle."""


class RoleViolationError(PathRegError, ValueError):
    """An input or output node is used in a way its role forbids."""


class DeadUnitError(PathRegError, ValueError):
    """Node unreachable from the inputs, or unable to reach an output."""


class MissingEdgeError(PathRegError, KeyError):
    """Referenced edge does not exist in the graph."""


class OracleTooLargeError(PathRegError, ValueError):
    """Exhaustive path enumeration would exceed the configured cap."""


class ShapeError(PathRegError, ValueError):
    """Array argument has the wrong shape or length."""


class NumericError(PathRegError, ArithmeticError):
    """Non-finite input, or overflow during accumulation."""


class InvalidParamsError(PathRegError, ValueError):
    """Norm parameters outside the supported range (p, q >= 1)."""


class InvalidFactorError(PathRegError, ValueError):
    """Rescaling factor must be strictly positive and finite."""


class DegenerateUnitError(PathRegError, ValueError):
    """Hidden unit with an all-zero incoming or outgoing weight group."""


class InvalidRequestError(PathRegError, ValueError):
    """Operation does not apply to this graph (e.g. no hidden units)."""


class FormatError(PathRegError, ValueError):
    """Binary dataset file does not match the expected layout."""


class TruncatedFileError(FormatError):
    """Dataset file ends before the header-declared payload."""


class DataConsistencyError(PathRegError, ValueError):
    """Dataset pieces disagree (counts, overlapping splits, bad labels)."""
