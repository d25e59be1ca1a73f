"""
MySQL adapter built on mysql-connector-python.
"""

from __future__ import annotations

import logging
from contextlib import closing
from typing import ClassVar

import mysql.connector
from mysql.connector import errorcode

from dbenergy.adapters.base import SqlAdapter, preview
from dbenergy.errors import (
    CredentialError,
    DatabaseConnectionError,
    UnknownDatabaseError,
)
from dbenergy.types import ColumnSpec, ColumnType, DbKind, QuerySpec

logger = logging.getLogger(__name__)

# Client-side codes for a connection that went away mid-run.
_LOST_CONNECTION = {errorcode.CR_SERVER_GONE_ERROR, errorcode.CR_SERVER_LOST}


class MySqlAdapter(SqlAdapter):
    """MySQL target, autocommit on."""

    kind = DbKind.MYSQL
    _driver_error = mysql.connector.Error
    _TYPE_NAMES: ClassVar[dict[ColumnType, str]] = {
        ColumnType.INTEGER: "BIGINT",
        ColumnType.REAL: "DOUBLE",
        ColumnType.TEXT: "TEXT",
        ColumnType.BOOLEAN: "BOOLEAN",
        ColumnType.TIMESTAMP: "DATETIME(6)",
    }

    def _connect(self) -> None:
        try:
            self._conn = mysql.connector.connect(
                host=self.host,
                port=self.port,
                user=self._config.get("username", "root"),
                password=self._config.get("password", ""),
                database=self._config.get("database_name"),
                connection_timeout=max(1, int(self.connect_timeout_s)),
                autocommit=True,
            )
        except mysql.connector.Error as e:
            raise self._connect_failure(e) from e

    def _connect_failure(self, error: mysql.connector.Error) -> DatabaseConnectionError:
        if error.errno == errorcode.ER_ACCESS_DENIED_ERROR:
            return CredentialError(
                f"authentication failed for {self.database_id} at {self.host}:{self.port}",
                self.database_id,
            )
        if error.errno == errorcode.ER_BAD_DB_ERROR:
            return UnknownDatabaseError(
                f"database {self._config.get('database_name')!r} does not exist "
                f"on {self.host}:{self.port}",
                self.database_id,
            )
        return DatabaseConnectionError(
            f"cannot connect to {self.host}:{self.port} ({self.database_id}): {error.msg}",
            self.database_id,
        )

    def quote(self, identifier: str) -> str:
        return "`" + identifier.replace("`", "``") + "`"

    def column_type(self, column: ColumnSpec, in_primary_key: bool) -> str:
        # TEXT cannot be indexed without a prefix length.
        if in_primary_key and column.declared_type is ColumnType.TEXT:
            return "VARCHAR(255)"
        return super().column_type(column, in_primary_key)

    def _query_failure(self, error: Exception, statement: str, spec: QuerySpec) -> Exception:
        errno = getattr(error, "errno", None)
        if errno in _LOST_CONNECTION:
            return DatabaseConnectionError(
                f"connection to {self.host}:{self.port} lost: {error}", self.database_id
            )
        parts = [str(getattr(error, "msg", None) or error)]
        if errno:
            parts.append(f"Error Code: {errno}")
        sqlstate = getattr(error, "sqlstate", None)
        if sqlstate:
            parts.append(f"SQLSTATE: {sqlstate}")
        parts.append(f"Query: {preview(statement)}")
        return self.query_error("\n".join(parts), spec)

    def _table_exists(self, table: str) -> bool:
        with closing(self._conn.cursor()) as cur:
            cur.execute(
                "SELECT 1 FROM information_schema.tables "
                "WHERE table_schema = DATABASE() AND table_name = %s",
                (table,),
            )
            return cur.fetchone() is not None
