"""
Database adapters for dbenergy.

One adapter per target kind, all behind the Adapter contract:
- mysql, postgresql: DB-API drivers
- mongodb: document-operation descriptors via pymongo
- couchbase: N1QL via the optional SDK
- shell: an external command per query
- mock: in-memory double for tests and dry runs
"""

from __future__ import annotations

from dbenergy.adapters.base import DEFAULT_PORTS, Adapter
from dbenergy.adapters.couchbase import CouchbaseAdapter
from dbenergy.adapters.mock import MockAdapter, mock_adapter
from dbenergy.adapters.mongodb import MongoAdapter
from dbenergy.adapters.mysql import MySqlAdapter
from dbenergy.adapters.postgresql import PostgresAdapter
from dbenergy.adapters.shell import ShellAdapter
from dbenergy.errors import ConfigError
from dbenergy.types import DbConfig, DbKind, ExecutionStats, QuerySpec

ADAPTERS: dict[DbKind, type[Adapter]] = {
    DbKind.MYSQL: MySqlAdapter,
    DbKind.POSTGRESQL: PostgresAdapter,
    DbKind.MONGODB: MongoAdapter,
    DbKind.COUCHBASE: CouchbaseAdapter,
    DbKind.SHELL: ShellAdapter,
    DbKind.MOCK: MockAdapter,
}


def create_adapter(config: DbConfig) -> Adapter:
    """
    Build an unconnected adapter for a target.

    Raises:
        ConfigError: If the kind is not supported.
    """
    try:
        kind = DbKind(config.get("kind", ""))
    except ValueError:
        supported = ", ".join(k.value for k in DbKind)
        raise ConfigError(
            f"unsupported kind {config.get('kind')!r} for {config.get('database_id')} "
            f"(supported: {supported})"
        ) from None
    return ADAPTERS[kind](config)


def connect(config: DbConfig) -> Adapter:
    """Build and connect an adapter; the connection is reused until close()."""
    adapter = create_adapter(config)
    adapter.connect()
    return adapter


def execute(conn: Adapter, spec: QuerySpec) -> ExecutionStats:
    """Execute a query on a connected adapter."""
    return conn.execute(spec)


def close(conn: Adapter) -> None:
    """Close an adapter; idempotent and best-effort."""
    conn.close()


__all__ = [
    "ADAPTERS",
    "DEFAULT_PORTS",
    "Adapter",
    "CouchbaseAdapter",
    "MockAdapter",
    "MongoAdapter",
    "MySqlAdapter",
    "PostgresAdapter",
    "ShellAdapter",
    "close",
    "connect",
    "create_adapter",
    "execute",
    "mock_adapter",
]
