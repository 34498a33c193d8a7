"""
Exception hierarchy and error-capture helpers for the SFE services
"""
from typing import Any, Optional

from shared.logging_config import get_logger

logger = get_logger(__name__)


class SfeError(Exception):
    """Base class for all solver errors"""
    pass


class GridError(SfeError, ValueError):
    """Grid parameters outside the supported set"""
    pass


class InvalidParameterError(SfeError, ValueError):
    """A numeric parameter is outside its admissible range"""
    pass


class SymmetryViolationError(SfeError):
    """Fourier coefficients do not describe a real field"""
    pass


class ConfigurationError(SfeError):
    """Inconsistent solver or case configuration"""
    pass


class ShiftRejectedError(SfeError, ValueError):
    """Shift coincides with a lattice value where -Δ - σ is singular on the torus"""

    def __init__(self, sigma: float, lattice_value: int):
        self.sigma = sigma
        self.lattice_value = lattice_value
        super().__init__(
            f"shift {sigma!r} is within tolerance of lattice value {lattice_value}"
        )


class BlowUpError(SfeError):
    """Time stepping produced an unbounded solution"""

    def __init__(self, step: int, norm: float, limit: float):
        self.step = step
        self.norm = norm
        self.limit = limit
        super().__init__(
            f"solution norm {norm:.3e} exceeded {limit:.3e} at step {step}"
        )


class SolveError(SfeError):
    """Minimum-norm solve left a residual far above its tolerance"""

    def __init__(self, message: str, diagnostics: Any = None):
        self.diagnostics = diagnostics
        super().__init__(message)


class NonConvergenceError(SfeError):
    """Iteration stopped at max_iters above tolerance; carries the partial result"""

    def __init__(self, message: str, result: Any = None):
        self.result = result
        super().__init__(message)


class ErrorHandler:
    """
    Context manager that logs an error and optionally suppresses it

    Example:
        with ErrorHandler("poisson_2d_disc k=1 N=64") as handler:
            run_cell()
        if handler.error is not None:
            record_failure(handler.error)
    """
    def __init__(
        self,
        operation: str,
        raise_on_error: bool = False
    ):
        self.operation = operation
        self.raise_on_error = raise_on_error
        self.error: Optional[BaseException] = None

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if exc_type is None:
            return True
        if not issubclass(exc_type, Exception):
            return False

        self.error = exc_val
        logger.error(
            f"Error during {self.operation}: {exc_val}",
            exc_info=(exc_type, exc_val, exc_tb)
        )
        if self.raise_on_error:
            return False
        return True

    @property
    def failed(self) -> bool:
        return self.error is not None
