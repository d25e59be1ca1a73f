"""
Deterministic in-memory adapter for tests and dry runs.

Options (all text, as in any DbConfig):
    latency_s: seconds each execute sleeps (default "0")
    fail_on: query label whose execution raises a QueryError
    connect_error: one of refused, auth, unknown_database
    disconnect_after: number of successful executes before the connection drops
"""

from __future__ import annotations

import logging
import time
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from typing import Any

from dbenergy.adapters.base import Adapter
from dbenergy.errors import (
    ConfigError,
    CredentialError,
    DatabaseConnectionError,
    StorageExistsError,
    UnknownDatabaseError,
)
from dbenergy.types import DatasetSchema, DbConfig, DbKind, Payload, QuerySpec

logger = logging.getLogger(__name__)

CONNECT_ERRORS = ("refused", "auth", "unknown_database")


@dataclass(frozen=True)
class DdlRequest:
    """A storage request recorded by the mock."""

    table: str
    schema: DatasetSchema
    replace: bool


class MockAdapter(Adapter):
    """
    Adapter double: sleeps a fixed latency per query and stores rows in memory.

    Usage:
        adapter = mock_adapter(latency_s=0.05, fail_on="q1")
        adapter.connect()
        stats = adapter.execute(spec)
    """

    kind = DbKind.MOCK

    def __init__(self, config: DbConfig) -> None:
        super().__init__(config)
        try:
            self.latency_s = float(self.options.get("latency_s", "0"))
        except ValueError:
            raise ConfigError(
                f"mock target {self.database_id}: latency_s must be a number"
            ) from None
        if self.latency_s < 0:
            raise ConfigError(f"mock target {self.database_id}: latency_s must be >= 0")
        self.fail_on = self.options.get("fail_on") or None
        connect_error = self.options.get("connect_error") or None
        if connect_error is not None and connect_error not in CONNECT_ERRORS:
            raise ConfigError(
                f"mock target {self.database_id}: connect_error must be one of "
                f"{', '.join(CONNECT_ERRORS)}"
            )
        self.connect_error = connect_error
        disconnect_after = self.options.get("disconnect_after")
        self.disconnect_after = int(disconnect_after) if disconnect_after else None
        self.executed: list[str] = []
        self.ddl: list[DdlRequest] = []
        self.tables: dict[str, list[dict[str, Any]]] = {}

    def _connect(self) -> None:
        if self.connect_error == "refused":
            raise DatabaseConnectionError(
                f"cannot connect to {self.host}:{self.port} ({self.database_id}): "
                "connection refused",
                self.database_id,
            )
        if self.connect_error == "auth":
            raise CredentialError(
                f"authentication failed for {self.database_id} at {self.host}:{self.port}",
                self.database_id,
            )
        if self.connect_error == "unknown_database":
            raise UnknownDatabaseError(
                f"database {self._config.get('database_name')!r} does not exist "
                f"on {self.host}:{self.port}",
                self.database_id,
            )

    def _close(self) -> None:
        pass

    def _execute(self, payload: Payload, spec: QuerySpec) -> int:
        if self.disconnect_after is not None and len(self.executed) >= self.disconnect_after:
            raise DatabaseConnectionError(
                f"connection to {self.host}:{self.port} lost", self.database_id
            )
        if self.latency_s > 0:
            time.sleep(self.latency_s)
        if spec.label == self.fail_on:
            raise self.query_error("mock failure", spec)
        self.executed.append(spec.label)
        return 0

    def create_storage(self, schema: DatasetSchema, table: str, replace: bool = False) -> None:
        self.ddl.append(DdlRequest(table, schema, replace))
        if table in self.tables and not replace:
            raise StorageExistsError(f"table {table} already exists in {self.database_id}")
        self.tables[table] = []

    def insert_rows(
        self,
        table: str,
        schema: DatasetSchema,
        rows: Sequence[Mapping[str, Any]],
        first_key: int,
    ) -> int:
        self.tables[table].extend(dict(row) for row in rows)
        return len(rows)

    def count_rows(self, table: str) -> int:
        return len(self.tables.get(table, []))


def mock_adapter(
    latency_s: float = 0.0,
    fail_on: str | None = None,
    database_id: str = "mock",
) -> MockAdapter:
    """
    Create a mock adapter.

    Args:
        latency_s: Seconds each execute sleeps before returning
        fail_on: Query label whose execution raises a QueryError
        database_id: Identifier reported in measurements and errors

    Returns:
        A MockAdapter instance (not yet connected)
    """
    options = {"latency_s": repr(float(latency_s))}
    if fail_on is not None:
        options["fail_on"] = fail_on
    return MockAdapter({"database_id": database_id, "kind": DbKind.MOCK.value, "options": options})
