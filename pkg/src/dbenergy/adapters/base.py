"""
Adapter contract shared by every database target.

An adapter owns one connection. The tracker and the experiment runner only
see this interface, never the kind behind it.
"""

from __future__ import annotations

import logging
import time
from abc import ABC, abstractmethod
from collections.abc import Mapping, Sequence
from contextlib import closing
from typing import Any, ClassVar

from dbenergy.errors import ConfigError, QueryError, StorageExistsError
from dbenergy.types import (
    ColumnSpec,
    ColumnType,
    DatasetSchema,
    DbConfig,
    DbKind,
    ExecutionStats,
    Payload,
    QuerySpec,
)

logger = logging.getLogger(__name__)

DEFAULT_CONNECT_TIMEOUT_S = 10.0
DEFAULT_PORTS = {
    DbKind.MYSQL: 3306,
    DbKind.POSTGRESQL: 5432,
    DbKind.MONGODB: 27017,
    DbKind.COUCHBASE: 8091,
}
# Floor for statements faster than the timer resolution.
_MIN_WALL_TIME_S = 1e-9


def preview(text: str, limit: int = 200) -> str:
    """Truncate a statement for error messages."""
    return text[:limit] + "..." if len(text) > limit else text


class Adapter(ABC):
    """
    Base class for database adapters.

    Provides:
    - Idempotent connect/close with context-manager support
    - Timed execute() returning ExecutionStats
    - Storage creation and row loading used by dataset ingest
    """

    kind: ClassVar[DbKind]
    supports_ingest: ClassVar[bool] = True

    def __init__(self, config: DbConfig) -> None:
        """
        Initialize the adapter.

        Args:
            config: Connection parameters of the target
        """
        self._config = config
        self._connected = False

    @property
    def config(self) -> DbConfig:
        """Return the connection configuration."""
        return self._config

    @property
    def database_id(self) -> str:
        return self._config.get("database_id", self.kind.value)

    @property
    def host(self) -> str:
        return self._config.get("host", "localhost")

    @property
    def port(self) -> int:
        return int(self._config.get("port", DEFAULT_PORTS.get(self.kind, 0)))

    @property
    def options(self) -> dict[str, str]:
        return self._config.get("options", {})

    @property
    def connect_timeout_s(self) -> float:
        return float(self.options.get("connect_timeout_s", DEFAULT_CONNECT_TIMEOUT_S))

    @property
    def connected(self) -> bool:
        return self._connected

    def connect(self) -> None:
        """Establish the connection; a no-op when already connected."""
        if self._connected:
            return
        self._connect()
        self._connected = True
        logger.info(f"Connected to {self.database_id} ({self.kind.value} at {self.host}:{self.port})")

    def close(self) -> None:
        """Release the connection. Idempotent and best-effort."""
        if not self._connected:
            return
        try:
            self._close()
            logger.debug(f"Closed connection to {self.database_id}")
        except Exception as e:
            logger.warning(f"Error closing connection to {self.database_id}: {e}")
        finally:
            self._connected = False

    def execute(self, spec: QuerySpec) -> ExecutionStats:
        """
        Execute a query and report rows affected and wall time.

        Result sets are drained before returning.

        Raises:
            ConfigError: If the query has no payload for this kind.
            QueryError: If the server rejects the statement.
        """
        if not self._connected:
            raise RuntimeError(f"Adapter {self.database_id} not connected. Call connect() first.")
        try:
            payload = spec.payload_for(self.kind)
        except KeyError as e:
            raise ConfigError(f"{self.database_id}: {e.args[0]}") from None

        started = time.perf_counter()
        rows = self._execute(payload, spec)
        wall = max(time.perf_counter() - started, _MIN_WALL_TIME_S)
        logger.debug(f"{self.database_id}/{spec.label}: {rows} rows in {wall:.4f}s")
        return ExecutionStats(rows_affected=max(0, rows), wall_time_s=wall)

    def query_error(self, message: str, spec: QuerySpec) -> QueryError:
        """Build a QueryError attributed to this target and query."""
        return QueryError(message, self.database_id, spec.label)

    @abstractmethod
    def _connect(self) -> None: ...

    @abstractmethod
    def _close(self) -> None: ...

    @abstractmethod
    def _execute(self, payload: Payload, spec: QuerySpec) -> int:
        """Run the payload and return rows (or documents) affected."""

    @abstractmethod
    def create_storage(self, schema: DatasetSchema, table: str, replace: bool = False) -> None:
        """Create the table or collection for a dataset."""

    @abstractmethod
    def insert_rows(
        self,
        table: str,
        schema: DatasetSchema,
        rows: Sequence[Mapping[str, Any]],
        first_key: int,
    ) -> int:
        """Insert coerced rows; first_key numbers document surrogate keys."""

    @abstractmethod
    def count_rows(self, table: str) -> int:
        """Count stored rows or documents."""

    def __enter__(self) -> Adapter:
        """Context manager entry."""
        self.connect()
        return self

    def __exit__(self, exc_type: Any, exc_val: Any, exc_tb: Any) -> None:
        """Context manager exit."""
        self.close()


class SqlAdapter(Adapter):
    """
    DB-API 2.0 adapter base for the SQL kinds.

    Subclasses supply the driver connection, identifier quoting, type names
    and error translation.
    """

    _TYPE_NAMES: ClassVar[dict[ColumnType, str]]
    _driver_error: ClassVar[type[Exception]]

    def __init__(self, config: DbConfig) -> None:
        super().__init__(config)
        self._conn: Any = None

    @abstractmethod
    def quote(self, identifier: str) -> str:
        """Quote an identifier for this dialect."""

    @abstractmethod
    def _table_exists(self, table: str) -> bool: ...

    @abstractmethod
    def _query_failure(self, error: Exception, statement: str, spec: QuerySpec) -> Exception:
        """Translate a driver error raised by a statement."""

    def column_type(self, column: ColumnSpec, in_primary_key: bool) -> str:
        return self._TYPE_NAMES[column.declared_type]

    def _close(self) -> None:
        if self._conn is not None:
            try:
                self._conn.close()
            finally:
                self._conn = None

    def _run(self, statement: str, params: Sequence[Any] | None = None) -> int:
        with closing(self._conn.cursor()) as cur:
            cur.execute(statement, params)
            if cur.description is not None:
                cur.fetchall()
            return int(cur.rowcount)

    def _execute(self, payload: Payload, spec: QuerySpec) -> int:
        if not isinstance(payload, str):
            raise ConfigError(f"query '{spec.label}' needs SQL text for {self.kind.value}")
        try:
            return self._run(payload)
        except self._driver_error as e:
            raise self._query_failure(e, payload, spec) from e

    def create_table_statement(self, schema: DatasetSchema, table: str) -> str:
        """Build the CREATE TABLE statement for a schema."""
        pk = set(schema.primary_key)
        parts = [
            f"{self.quote(c.name)} {self.column_type(c, c.name in pk)}" for c in schema.columns
        ]
        if schema.primary_key:
            keys = ", ".join(self.quote(name) for name in schema.primary_key)
            parts.append(f"PRIMARY KEY ({keys})")
        return f"CREATE TABLE {self.quote(table)} ({', '.join(parts)})"

    def create_storage(self, schema: DatasetSchema, table: str, replace: bool = False) -> None:
        if self._table_exists(table):
            if not replace:
                raise StorageExistsError(f"table {table} already exists in {self.database_id}")
            self._run(f"DROP TABLE {self.quote(table)}")
            logger.info(f"Dropped table {table} in {self.database_id}")
        self._run(self.create_table_statement(schema, table))
        logger.info(f"Created table {table} in {self.database_id}")

    def insert_rows(
        self,
        table: str,
        schema: DatasetSchema,
        rows: Sequence[Mapping[str, Any]],
        first_key: int,
    ) -> int:
        if not rows:
            return 0
        names = schema.column_names
        columns = ", ".join(self.quote(n) for n in names)
        placeholders = ", ".join(["%s"] * len(names))
        statement = f"INSERT INTO {self.quote(table)} ({columns}) VALUES ({placeholders})"
        with closing(self._conn.cursor()) as cur:
            cur.executemany(statement, [tuple(row.get(n) for n in names) for row in rows])
        return len(rows)

    def count_rows(self, table: str) -> int:
        with closing(self._conn.cursor()) as cur:
            cur.execute(f"SELECT COUNT(*) FROM {self.quote(table)}")
            (count,) = cur.fetchone()
        return int(count)
