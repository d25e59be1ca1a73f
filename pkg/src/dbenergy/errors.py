"""
Error hierarchy for dbenergy.

Every error carries the process exit code the CLI reports for it:
2 configuration/validation, 3 connection, 4 measurement/query/data.
"""

from __future__ import annotations


class DbEnergyError(Exception):
    """Base class for all dbenergy errors."""

    exit_code: int = 4


class ConfigError(DbEnergyError):
    """Malformed or inconsistent configuration, query, or schema input."""

    exit_code = 2


class SchemaValidationError(ConfigError):
    """Declared dataset schema does not fit the dataset header or targets."""


class SamplerConfigError(ConfigError):
    """Sampler cannot be opened with the given process selector."""


class DatabaseConnectionError(DbEnergyError):
    """A database target could not be reached."""

    exit_code = 3

    def __init__(self, message: str, database_id: str | None = None) -> None:
        super().__init__(message)
        self.database_id = database_id


class CredentialError(DatabaseConnectionError):
    """The server rejected the configured credentials."""


class UnknownDatabaseError(DatabaseConnectionError):
    """The configured database (or bucket) does not exist on the server."""


class MeasurementError(DbEnergyError):
    """Base class for failures while measuring or handling measured data."""

    exit_code = 4


class QueryError(MeasurementError):
    """A statement failed on the server."""

    def __init__(self, message: str, database_id: str, query_label: str) -> None:
        super().__init__(f"[{database_id}/{query_label}] {message}")
        self.database_id = database_id
        self.query_label = query_label
        self.server_message = message


class TrackingError(MeasurementError):
    """The tracked job failed; no measurement was emitted."""

    def __init__(
        self,
        message: str,
        database_id: str,
        query_label: str,
        job_error: BaseException | None = None,
    ) -> None:
        super().__init__(f"[{database_id}/{query_label}] {message}")
        self.database_id = database_id
        self.query_label = query_label
        self.job_error = job_error
        if isinstance(job_error, DbEnergyError):
            self.exit_code = job_error.exit_code


class ProbeError(MeasurementError):
    """Reading a resource probe failed."""


class DataError(MeasurementError):
    """Dataset content could not be read or coerced."""

    def __init__(self, message: str, inserted: int = 0) -> None:
        super().__init__(message)
        self.inserted = inserted


class StorageExistsError(MeasurementError):
    """Target table or collection already exists and replace was not requested."""


class InsufficientDataError(MeasurementError):
    """Not enough populated cells to compute a statistic."""


class ReportFormatError(MeasurementError):
    """A results file does not conform to the expected layout."""
