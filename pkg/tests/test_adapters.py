"""
Tests for database adapters that run without a live server: the mock and
shell adapters, the kind registry, error translation and DDL generation.
"""

import time

import mysql.connector
import psycopg2
import pytest
from mysql.connector import errorcode

from dbenergy.adapters import close, connect, create_adapter, execute, mock_adapter
from dbenergy.adapters.mock import MockAdapter
from dbenergy.adapters.mongodb import validate_operation
from dbenergy.adapters.mysql import MySqlAdapter
from dbenergy.adapters.postgresql import PostgresAdapter
from dbenergy.adapters.shell import ShellAdapter
from dbenergy.errors import (
    ConfigError,
    CredentialError,
    DatabaseConnectionError,
    QueryError,
    StorageExistsError,
    UnknownDatabaseError,
)
from dbenergy.types import (
    ColumnSpec,
    ColumnType,
    DatasetSchema,
    DbKind,
    MongoOperation,
    QueryKind,
    QuerySpec,
)
from tests.conftest import mock_db


def spec(label: str = "q1", **payloads: str) -> QuerySpec:
    by_kind = {DbKind(k): v for k, v in payloads.items()} or {DbKind.MOCK: "noop"}
    return QuerySpec(label, QueryKind.SELECT, by_kind)


SCHEMA = DatasetSchema(
    (
        ColumnSpec("code", ColumnType.TEXT),
        ColumnSpec("amount", ColumnType.REAL),
        ColumnSpec("seen_at", ColumnType.TIMESTAMP),
    ),
    primary_key=("code",),
)


class TestMockAdapter:
    """Tests for the in-memory adapter."""

    def test_zero_latency(self):
        """Test an instant execute."""
        with mock_adapter() as adapter:
            stats = adapter.execute(spec())
        assert stats.rows_affected == 0
        assert 0 < stats.wall_time_s < 0.05

    def test_latency(self):
        """Test that execute sleeps the configured latency."""
        with mock_adapter(latency_s=0.05) as adapter:
            started = time.perf_counter()
            stats = adapter.execute(spec())
            elapsed = time.perf_counter() - started
        assert stats.wall_time_s >= 0.05
        assert elapsed >= 0.05

    def test_fail_on(self):
        """Test that the configured label fails and others succeed."""
        with mock_adapter(fail_on="bad") as adapter:
            adapter.execute(spec("good"))
            with pytest.raises(QueryError, match="mock failure"):
                adapter.execute(spec("bad"))
            assert adapter.executed == ["good"]

    def test_not_connected(self):
        """Test that execute requires connect()."""
        with pytest.raises(RuntimeError, match="not connected"):
            mock_adapter().execute(spec())

    def test_missing_payload(self):
        """Test that a query without a payload for the kind is a config error."""
        with mock_adapter(database_id="m1") as adapter:
            with pytest.raises(ConfigError, match="^m1: query 'q1' has no payload for mock"):
                adapter.execute(spec(postgresql="SELECT 1"))

    def test_close_twice(self):
        """Test that close is idempotent."""
        adapter = connect(mock_db("m"))
        close(adapter)
        close(adapter)
        assert not adapter.connected

    @pytest.mark.parametrize(
        "kind,error",
        [
            ("refused", DatabaseConnectionError),
            ("auth", CredentialError),
            ("unknown_database", UnknownDatabaseError),
        ],
    )
    def test_connect_errors(self, kind, error):
        """Test the simulated connection failures and their exit code."""
        with pytest.raises(error) as exc_info:
            connect(mock_db("m", connect_error=kind))
        assert exc_info.value.exit_code == 3
        assert exc_info.value.database_id == "m"

    def test_bad_options(self):
        """Test option validation."""
        with pytest.raises(ConfigError, match="latency_s"):
            create_adapter(mock_db("m", latency_s="slow"))
        with pytest.raises(ConfigError, match="connect_error"):
            create_adapter(mock_db("m", connect_error="flaky"))

    def test_disconnect_after(self):
        """Test that the connection drops after the configured number of executes."""
        adapter = connect(mock_db("m", disconnect_after=2))
        execute(adapter, spec("a"))
        execute(adapter, spec("b"))
        with pytest.raises(DatabaseConnectionError, match="lost"):
            execute(adapter, spec("c"))

    def test_storage(self):
        """Test DDL recording, existing tables, and row storage."""
        with mock_adapter() as adapter:
            assert isinstance(adapter, MockAdapter)
            adapter.create_storage(SCHEMA, "dataset")
            with pytest.raises(StorageExistsError):
                adapter.create_storage(SCHEMA, "dataset")
            adapter.create_storage(SCHEMA, "dataset", replace=True)
            assert adapter.insert_rows("dataset", SCHEMA, [{"code": "a"}, {"code": "b"}], 1) == 2
            assert adapter.count_rows("dataset") == 2
            assert [d.replace for d in adapter.ddl] == [False, False, True]


class TestCreateAdapter:
    """Tests for the kind registry."""

    @pytest.mark.parametrize(
        "kind,cls",
        [
            ("mock", MockAdapter),
            ("mysql", MySqlAdapter),
            ("postgresql", PostgresAdapter),
            ("shell", ShellAdapter),
        ],
    )
    def test_kinds(self, kind, cls):
        """Test that each kind maps to its adapter class."""
        assert isinstance(create_adapter({"database_id": "x", "kind": kind}), cls)

    def test_unsupported_kind(self):
        """Test that an unknown kind names the supported ones."""
        with pytest.raises(ConfigError, match="unsupported kind 'oracle'") as exc_info:
            create_adapter({"database_id": "x", "kind": "oracle"})
        assert exc_info.value.exit_code == 2

    def test_default_ports(self):
        """Test per-kind default ports."""
        assert create_adapter({"database_id": "x", "kind": "mysql"}).port == 3306
        assert create_adapter({"database_id": "x", "kind": "postgresql"}).port == 5432
        assert create_adapter({"database_id": "x", "kind": "mongodb"}).port == 27017


class TestShellAdapter:
    """Tests for the external-command adapter."""

    def config(self, command: str):
        return {"database_id": "sh", "kind": "shell", "options": {"command": command}}

    def test_successful_command(self):
        """Test a command that exits 0."""
        with connect(self.config("echo")) as adapter:
            stats = adapter.execute(spec(shell="SELECT 1"))
        assert stats.rows_affected == 0

    def test_failing_command(self):
        """Test that a non-zero exit becomes a QueryError."""
        with connect(self.config("false")) as adapter:
            with pytest.raises(QueryError, match="exit status 1"):
                adapter.execute(spec(shell="anything"))

    def test_missing_command(self):
        """Test that options.command is required."""
        with pytest.raises(ConfigError, match="needs options.command"):
            connect({"database_id": "sh", "kind": "shell"})

    def test_command_not_on_path(self):
        """Test that an unknown executable is rejected at connect time."""
        with pytest.raises(ConfigError, match="not found on PATH"):
            connect(self.config("dbenergy-no-such-binary --flag"))

    def test_no_ingest(self):
        """Test that the shell target refuses dataset ingest."""
        with connect(self.config("echo")) as adapter:
            assert not adapter.supports_ingest
            with pytest.raises(ConfigError, match="does not support dataset ingest"):
                adapter.create_storage(SCHEMA, "dataset")


class TestErrorTranslation:
    """Tests for driver error mapping without a server."""

    def pg(self):
        return PostgresAdapter({"database_id": "pg", "kind": "postgresql", "database_name": "nope"})

    def my(self):
        return MySqlAdapter({"database_id": "my", "kind": "mysql", "database_name": "nope"})

    def test_pg_auth(self):
        """Test a rejected password."""
        error = psycopg2.OperationalError('FATAL:  password authentication failed for user "x"')
        assert isinstance(self.pg()._connect_failure(error), CredentialError)

    def test_pg_unknown_database(self):
        """Test a missing database."""
        error = psycopg2.OperationalError('FATAL:  database "nope" does not exist')
        assert isinstance(self.pg()._connect_failure(error), UnknownDatabaseError)

    def test_pg_refused(self):
        """Test that an unreachable port is a plain connection error."""
        config = {
            "database_id": "pg",
            "kind": "postgresql",
            "host": "127.0.0.1",
            "port": 1,
            "options": {"connect_timeout_s": "1"},
        }
        with pytest.raises(DatabaseConnectionError) as exc_info:
            connect(config)
        assert type(exc_info.value) is DatabaseConnectionError
        assert "127.0.0.1:1" in str(exc_info.value)

    def test_mysql_codes(self):
        """Test access-denied and unknown-database codes."""
        denied = mysql.connector.Error(msg="Access denied", errno=errorcode.ER_ACCESS_DENIED_ERROR)
        bad_db = mysql.connector.Error(msg="Unknown database", errno=errorcode.ER_BAD_DB_ERROR)
        other = mysql.connector.Error(msg="Can't connect", errno=2003)
        assert isinstance(self.my()._connect_failure(denied), CredentialError)
        assert isinstance(self.my()._connect_failure(bad_db), UnknownDatabaseError)
        assert type(self.my()._connect_failure(other)) is DatabaseConnectionError

    def test_mysql_query_failure_details(self):
        """Test that statement errors carry code, state and a query preview."""
        error = mysql.connector.Error(msg="Table 'x' doesn't exist", errno=1146, sqlstate="42S02")
        result = self.my()._query_failure(error, "SELECT * FROM x", spec("q_select"))
        assert isinstance(result, QueryError)
        assert "Error Code: 1146" in str(result)
        assert "SQLSTATE: 42S02" in str(result)
        assert "Query: SELECT * FROM x" in str(result)
        assert str(result).startswith("[my/q_select]")

    def test_mysql_lost_connection(self):
        """Test that a server-gone code marks the connection as lost."""
        error = mysql.connector.Error(msg="gone", errno=errorcode.CR_SERVER_LOST)
        result = self.my()._query_failure(error, "SELECT 1", spec())
        assert isinstance(result, DatabaseConnectionError)


class TestMySqlDdl:
    """Tests for MySQL table DDL."""

    def test_create_table(self):
        """Test quoting, type names and the indexed text key."""
        statement = MySqlAdapter({"database_id": "my", "kind": "mysql"}).create_table_statement(
            SCHEMA, "dataset"
        )
        assert statement == (
            "CREATE TABLE `dataset` (`code` VARCHAR(255), `amount` DOUBLE, "
            "`seen_at` DATETIME(6), PRIMARY KEY (`code`))"
        )


class TestValidateOperation:
    """Tests for document descriptor validation."""

    def test_valid(self):
        """Test a well-formed find."""
        validate_operation(MongoOperation("dataset", "find", {"country": "Spain"}), "q")

    def test_unknown_operation(self):
        """Test that only the four CRUD operations are accepted."""
        with pytest.raises(ConfigError, match="unknown mongodb operation 'aggregate'"):
            validate_operation(MongoOperation("dataset", "aggregate"), "q")

    def test_update_needs_update(self):
        """Test that update_many requires an update document."""
        with pytest.raises(ConfigError, match="update_many needs filter and update"):
            validate_operation(MongoOperation("dataset", "update_many", {"a": 1}), "q")

    def test_insert_needs_documents(self):
        """Test that insert_many requires documents."""
        with pytest.raises(ConfigError, match="insert_many needs documents"):
            validate_operation(MongoOperation("dataset", "insert_many"), "q")
