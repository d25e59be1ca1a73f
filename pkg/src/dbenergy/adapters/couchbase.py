"""
Couchbase adapter.

The SDK is an optional extra (`poetry install -E couchbase`); without it the
adapter raises a ConfigError on connect and the rest of the package works.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from datetime import datetime, timedelta
from typing import Any

from dbenergy.adapters.base import Adapter, preview
from dbenergy.errors import (
    ConfigError,
    CredentialError,
    DatabaseConnectionError,
    StorageExistsError,
    UnknownDatabaseError,
)
from dbenergy.types import DatasetSchema, DbKind, Payload, QuerySpec

try:
    from couchbase import exceptions as cb_errors
    from couchbase.auth import PasswordAuthenticator
    from couchbase.cluster import Cluster
    from couchbase.management.collections import CollectionSpec
    from couchbase.options import ClusterOptions, ClusterTimeoutOptions

    HAVE_SDK = True
except ImportError:
    HAVE_SDK = False

logger = logging.getLogger(__name__)

SCOPE = "_default"


def _jsonable(value: Any) -> Any:
    return value.isoformat() if isinstance(value, datetime) else value


class CouchbaseAdapter(Adapter):
    """Couchbase target; database_name names the bucket, queries are N1QL text."""

    kind = DbKind.COUCHBASE

    def __init__(self, config: Any) -> None:
        super().__init__(config)
        self._cluster: Any = None
        self._bucket: Any = None

    @property
    def bucket_name(self) -> str:
        return self._config.get("database_name", "default")

    def _connect(self) -> None:
        if not HAVE_SDK:
            raise ConfigError(
                "couchbase targets need the optional SDK: poetry install -E couchbase"
            )
        timeout = timedelta(seconds=self.connect_timeout_s)
        options = ClusterOptions(
            PasswordAuthenticator(
                self._config.get("username", "Administrator"), self._config.get("password", "")
            ),
            timeout_options=ClusterTimeoutOptions(
                connect_timeout=timeout, bootstrap_timeout=timeout
            ),
        )
        try:
            cluster = Cluster(f"couchbase://{self.host}", options)
            cluster.wait_until_ready(timeout)
            bucket = cluster.bucket(self.bucket_name)
        except cb_errors.AuthenticationException as e:
            raise CredentialError(
                f"authentication failed for {self.database_id} at {self.host}:{self.port}",
                self.database_id,
            ) from e
        except cb_errors.BucketNotFoundException as e:
            raise UnknownDatabaseError(
                f"bucket {self.bucket_name!r} does not exist on {self.host}:{self.port}",
                self.database_id,
            ) from e
        except cb_errors.CouchbaseException as e:
            raise DatabaseConnectionError(
                f"cannot connect to {self.host}:{self.port} ({self.database_id}): {e}",
                self.database_id,
            ) from e
        self._cluster = cluster
        self._bucket = bucket

    def _close(self) -> None:
        cluster, self._cluster, self._bucket = self._cluster, None, None
        if cluster is not None:
            cluster.close()

    def _keyspace(self, table: str) -> str:
        return f"`{self.bucket_name}`.`{SCOPE}`.`{table}`"

    def _query(self, statement: str) -> Any:
        result = self._cluster.query(statement)
        rows = sum(1 for _ in result.rows())
        return rows, result.metadata()

    def _execute(self, payload: Payload, spec: QuerySpec) -> int:
        if not isinstance(payload, str):
            raise ConfigError(f"query '{spec.label}' needs N1QL text for couchbase")
        try:
            rows, metadata = self._query(payload)
        except cb_errors.UnAmbiguousTimeoutException as e:
            raise DatabaseConnectionError(
                f"connection to {self.host}:{self.port} lost: {e}", self.database_id
            ) from e
        except cb_errors.CouchbaseException as e:
            raise self.query_error(f"{e}\nQuery: {preview(payload)}", spec) from e
        metrics = metadata.metrics() if metadata is not None else None
        mutations = getattr(metrics, "mutation_count", lambda: 0)() if metrics else 0
        return int(mutations) or rows

    def create_storage(self, schema: DatasetSchema, table: str, replace: bool = False) -> None:
        manager = self._bucket.collections()
        existing = {
            c.name for s in manager.get_all_scopes() if s.name == SCOPE for c in s.collections
        }
        if table in existing:
            if not replace:
                raise StorageExistsError(
                    f"collection {table} already exists in {self.database_id}"
                )
            manager.drop_collection(CollectionSpec(table, scope_name=SCOPE))
            logger.info(f"Dropped collection {table} in {self.database_id}")
        manager.create_collection(CollectionSpec(table, scope_name=SCOPE))
        try:
            self._cluster.query(f"CREATE PRIMARY INDEX ON {self._keyspace(table)}").execute()
        except cb_errors.QueryIndexAlreadyExistsException:
            pass
        self._bucket.default_collection().upsert(f"_schema::{table}", schema.to_dict())
        logger.info(f"Created collection {table} in {self.database_id}")

    def insert_rows(
        self,
        table: str,
        schema: DatasetSchema,
        rows: Sequence[Mapping[str, Any]],
        first_key: int,
    ) -> int:
        collection = self._bucket.scope(SCOPE).collection(table)
        for i, row in enumerate(rows):
            doc = {k: _jsonable(v) for k, v in row.items() if v is not None}
            collection.upsert(str(first_key + i), doc)
        return len(rows)

    def count_rows(self, table: str) -> int:
        rows = list(self._cluster.query(f"SELECT COUNT(*) AS n FROM {self._keyspace(table)}"))
        return int(rows[0]["n"]) if rows else 0
