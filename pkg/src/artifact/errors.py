"""Exception hierarchy shared by all modules."""


class ArtifactError(Exception):
    """Base class for every error raised by this package."""


class ContractError(ArtifactError, ValueError):
    """An input violates a documented precondition."""


class ParseError(ArtifactError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ResourceError(ArtifactError, MemoryError):
    """The requested computation exceeds the supported register size."""


class NumericalError(ArtifactError, ArithmeticError):
    """A numerical routine failed (non-finite values, drift, no convergence)."""


class CalibrationError(NumericalError):
    """Gate calibration could not reach its target."""

    def __init__(self, message: str, diagnostic=None):
        self.diagnostic = diagnostic
        super().__init__(message)


class RankDeficiencyError(NumericalError):
    """A metric matrix is singular beyond the configured cutoff."""

    def __init__(self, message: str, null_vectors=None):
        self.null_vectors = null_vectors
        super().__init__(message)


class FitError(NumericalError):
    """A least-squares fit is degenerate or failed."""
