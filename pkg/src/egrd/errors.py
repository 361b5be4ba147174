"""Exception hierarchy shared by all modules."""


class GrdError(Exception):
    """Base class for package errors."""


class StructureError(GrdError, ValueError):
    """Malformed input: bad shapes, non-finite values, unsorted axes."""


class AxisMismatchError(GrdError, ValueError):
    """Two objects that must share axes do not."""


class DomainError(GrdError, ValueError):
    """Query outside the domain of a curve (no extrapolation)."""


class FitError(GrdError, RuntimeError):
    """A curve fitter could not produce a usable model."""


class SolverError(GrdError, RuntimeError):
    """The QP solver failed to return a solution."""


class SchemaError(GrdError, ValueError):
    """A file does not follow the expected schema."""
