"""
Exception hierarchy for mdpreg.

Library code raises these; only the command-line layer turns them into
exit codes.
"""
from typing import List, Optional


class MdpError(Exception):
    """Base class for every error raised by this package."""


class DomainError(MdpError, ValueError):
    """Argument outside the domain of a special function or distribution."""


class DimensionMismatchError(MdpError, ValueError):
    """Array shapes that must agree do not."""


class NotPositiveDefiniteError(MdpError, ArithmeticError):
    """Cholesky factorization failed even after one jitter rescue."""


class InvalidConfigError(MdpError, ValueError):
    """Hyperparameters violate one or more constraints."""

    def __init__(self, errors: List[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ConfigFileError(MdpError, ValueError):
    """A key=value configuration file could not be used."""


class StateFileError(MdpError):
    """Base class for state persistence failures."""


class CorruptStateFileError(StateFileError):
    """State file is unreadable or structurally broken."""


class StateVersionMismatchError(StateFileError):
    """State file schema version differs from the supported one."""

    def __init__(self, found: Optional[int], expected: int):
        self.found = found
        self.expected = expected
        super().__init__(f"state file version mismatch: found {found}, expected {expected}")


class StateDimensionError(StateFileError):
    """A stored matrix disagrees with its declared or implied dimensions."""


class ConstantColumnError(MdpError, ValueError):
    """A covariate column has zero spread."""


class InsufficientDataError(MdpError, ValueError):
    """Too few rows or points for the requested operation."""


class DegenerateBandwidthError(MdpError, ArithmeticError):
    """Kernel bandwidth estimate is zero."""


class DegenerateShapeError(MdpError, ArithmeticError):
    """A predictive component has a non-positive shape correction."""


class ImproperMixtureError(MdpError, ValueError):
    """The predictive mixture lacks a moment or a valid argument."""


class NonConvergenceError(MdpError, ArithmeticError):
    """An iterative solver did not reach its tolerance."""


class DegenerateSampleError(MdpError, ValueError):
    """A sample has zero spread in some dimension."""


class DegenerateQuantileError(MdpError, ArithmeticError):
    """A baseline quantile is zero."""


class DataFormatError(MdpError, ValueError):
    """Input table is malformed."""


class RaggedRowError(DataFormatError):
    """A CSV row has the wrong number of fields."""


class NonNumericCellError(DataFormatError):
    """A CSV cell could not be parsed as a number."""


class UnknownColumnError(DataFormatError):
    """A requested column does not exist."""


class MissingInputError(MdpError, FileNotFoundError):
    """An input path does not exist."""
