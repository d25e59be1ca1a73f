"""
PostgreSQL adapter built on psycopg2.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from contextlib import closing
from typing import Any, ClassVar

import psycopg2
from psycopg2 import sql
from psycopg2.extras import execute_values

from dbenergy.adapters.base import SqlAdapter, preview
from dbenergy.errors import (
    CredentialError,
    DatabaseConnectionError,
    UnknownDatabaseError,
)
from dbenergy.types import ColumnType, DatasetSchema, DbKind, QuerySpec

logger = logging.getLogger(__name__)


class PostgresAdapter(SqlAdapter):
    """
    PostgreSQL target.

    Runs in autocommit mode: every measured statement is committed on its own.
    """

    kind = DbKind.POSTGRESQL
    _driver_error = psycopg2.Error
    _TYPE_NAMES: ClassVar[dict[ColumnType, str]] = {
        ColumnType.INTEGER: "BIGINT",
        ColumnType.REAL: "DOUBLE PRECISION",
        ColumnType.TEXT: "TEXT",
        ColumnType.BOOLEAN: "BOOLEAN",
        ColumnType.TIMESTAMP: "TIMESTAMP",
    }

    def _connect(self) -> None:
        try:
            self._conn = psycopg2.connect(
                host=self.host,
                port=self.port,
                dbname=self._config.get("database_name", "postgres"),
                user=self._config.get("username", "postgres"),
                password=self._config.get("password", ""),
                connect_timeout=max(1, int(self.connect_timeout_s)),
            )
        except psycopg2.OperationalError as e:
            raise self._connect_failure(e) from e
        self._conn.autocommit = True

    def _connect_failure(self, error: psycopg2.OperationalError) -> DatabaseConnectionError:
        message = str(error).strip()
        lowered = message.lower()
        if "authentication failed" in lowered or "no password supplied" in lowered:
            return CredentialError(
                f"authentication failed for {self.database_id} at {self.host}:{self.port}",
                self.database_id,
            )
        if "database" in lowered and "does not exist" in lowered:
            return UnknownDatabaseError(
                f"database {self._config.get('database_name')!r} does not exist "
                f"on {self.host}:{self.port}",
                self.database_id,
            )
        return DatabaseConnectionError(
            f"cannot connect to {self.host}:{self.port} ({self.database_id}): {message}",
            self.database_id,
        )

    def quote(self, identifier: str) -> str:
        return str(sql.Identifier(identifier).as_string(self._conn))

    def _query_failure(self, error: Exception, statement: str, spec: QuerySpec) -> Exception:
        """Enhance a psycopg2 error with server details and a query preview."""
        if self._conn is None or self._conn.closed:
            return DatabaseConnectionError(
                f"connection to {self.host}:{self.port} lost: {error}", self.database_id
            )
        parts = [str(error).strip()]
        pgcode = getattr(error, "pgcode", None)
        if pgcode:
            parts.append(f"Error Code: {pgcode}")
        parts.append(f"Query: {preview(statement)}")
        return self.query_error("\n".join(parts), spec)

    def _table_exists(self, table: str) -> bool:
        with closing(self._conn.cursor()) as cur:
            cur.execute(
                "SELECT 1 FROM information_schema.tables "
                "WHERE table_schema = current_schema() AND table_name = %s",
                (table,),
            )
            return cur.fetchone() is not None

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
        statement = sql.SQL("INSERT INTO {} ({}) VALUES %s").format(
            sql.Identifier(table),
            sql.SQL(", ").join(sql.Identifier(n) for n in names),
        )
        with closing(self._conn.cursor()) as cur:
            execute_values(
                cur,
                statement.as_string(self._conn),
                [tuple(row.get(n) for n in names) for row in rows],
                page_size=len(rows),
            )
        return len(rows)
