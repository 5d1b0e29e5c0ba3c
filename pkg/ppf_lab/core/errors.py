"""
Exception hierarchy shared by every layer.

Services raise these; the CLI boundary (``ppf_lab.main``) maps ``exit_code``
to the process status: 2 for usage / configuration problems, 1 for runtime
failures.
"""
from __future__ import annotations

from typing import Optional


class PpfLabError(Exception):
    """Base class; ``exit_code`` is what the CLI returns when it escapes."""

    exit_code: int = 1


# --------------------------------------------------------------------------- #
# Usage / configuration (exit 2)
# --------------------------------------------------------------------------- #
class ConfigurationError(PpfLabError, ValueError):
    exit_code = 2


class CaseParseError(PpfLabError, ValueError):
    exit_code = 2

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class CaseValidationError(PpfLabError, ValueError):
    exit_code = 2


class InputFileNotFound(PpfLabError, FileNotFoundError):
    exit_code = 2

    def __init__(self, path: object, what: str = "file") -> None:
        self.path = path
        super().__init__(f"{what} not found: {path}")


# --------------------------------------------------------------------------- #
# Runtime (exit 1)
# --------------------------------------------------------------------------- #
class ContractViolation(PpfLabError, ValueError):
    """Shapes or dimensions passed across an API boundary do not match."""


class SingularElementError(PpfLabError, ValueError):
    pass


class SolverError(PpfLabError, ArithmeticError):
    def __init__(self, message: str, iteration: Optional[int] = None) -> None:
        self.iteration = iteration
        super().__init__(f"iteration {iteration}: {message}" if iteration is not None else message)


class DatasetError(PpfLabError):
    pass


class DatasetFormatError(DatasetError, ValueError):
    pass


class UnderdeterminedError(PpfLabError, ValueError):
    pass


class DivergenceError(PpfLabError, ArithmeticError):
    def __init__(self, message: str, epoch: int, batch: int) -> None:
        self.epoch = epoch
        self.batch = batch
        super().__init__(f"epoch {epoch}, batch {batch}: {message}")


class BundleError(PpfLabError):
    pass


class StaleArtifactError(PpfLabError):
    """An input artifact was produced by a different config or case."""

    exit_code = 2


__all__ = [
    "PpfLabError",
    "ConfigurationError",
    "CaseParseError",
    "CaseValidationError",
    "InputFileNotFound",
    "ContractViolation",
    "SingularElementError",
    "SolverError",
    "DatasetError",
    "DatasetFormatError",
    "UnderdeterminedError",
    "DivergenceError",
    "BundleError",
    "StaleArtifactError",
]
