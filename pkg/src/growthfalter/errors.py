"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 1, data
problems exit 2, numerical failures exit 3.
"""


class GrowthFalterError(Exception):
    """Base class for all package errors."""


class ConfigError(GrowthFalterError):
    """Invalid run configuration (bad flag values, inconsistent options)."""


class DataError(GrowthFalterError):
    """Input data violates the format or content contract."""


class MalformedRowError(DataError):
    """A data row failed to parse; carries the 1-based row number."""

    def __init__(self, row_number: int, message: str):
        super().__init__(f"row {row_number}: {message}")
        self.row_number = row_number


class DuplicateMeasurementError(DataError):
    """Two retained measurements share the same (child_id, age)."""


class EmptyDatasetError(DataError):
    """No children survived ingestion filters."""


class NumericalError(GrowthFalterError):
    """A numerical procedure failed with no usable result."""


class SingularDesignError(NumericalError):
    """The fixed-effect design has no unique least-squares solution."""


class DegenerateDataError(NumericalError):
    """Input values carry no variation where some is required."""
