"""
MongoDB adapter built on pymongo.

Queries arrive as MongoOperation descriptors rather than text.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping, Sequence
from typing import Any

from pymongo import MongoClient
from pymongo.errors import (
    AutoReconnect,
    ConnectionFailure,
    OperationFailure,
    PyMongoError,
    ServerSelectionTimeoutError,
)

from dbenergy.adapters.base import Adapter
from dbenergy.errors import (
    ConfigError,
    CredentialError,
    DatabaseConnectionError,
    StorageExistsError,
)
from dbenergy.types import DatasetSchema, DbKind, MongoOperation, Payload, QuerySpec

logger = logging.getLogger(__name__)

OPERATIONS = ("find", "insert_many", "update_many", "delete_many")
SCHEMA_COLLECTION = "_dataset_schemas"
_AUTH_FAILED = 18


def validate_operation(op: MongoOperation, label: str) -> None:
    """
    Check the fields a descriptor needs for its operation.

    Raises:
        ConfigError: If the operation is unknown or a required field is empty.
    """
    if op.operation not in OPERATIONS:
        raise ConfigError(
            f"query '{label}': unknown mongodb operation {op.operation!r} "
            f"(expected one of {', '.join(OPERATIONS)})"
        )
    if not op.collection:
        raise ConfigError(f"query '{label}': mongodb descriptor needs a collection")
    if op.operation == "update_many" and (not op.filter or not op.update):
        raise ConfigError(f"query '{label}': update_many needs filter and update")
    if op.operation == "insert_many" and not op.documents:
        raise ConfigError(f"query '{label}': insert_many needs documents")


class MongoAdapter(Adapter):
    """
    MongoDB target.

    The configured database is created lazily by the server on first write,
    so a missing database_name is not a connect-time error.
    """

    kind = DbKind.MONGODB

    def __init__(self, config: Any) -> None:
        super().__init__(config)
        self._client: MongoClient[dict[str, Any]] | None = None

    @property
    def _db(self) -> Any:
        assert self._client is not None
        return self._client[self._config.get("database_name", "dbenergy")]

    def _connect(self) -> None:
        kwargs: dict[str, Any] = {
            "host": self.host,
            "port": self.port,
            "serverSelectionTimeoutMS": int(self.connect_timeout_s * 1000),
            "connectTimeoutMS": int(self.connect_timeout_s * 1000),
        }
        if self._config.get("username"):
            kwargs["username"] = self._config["username"]
            kwargs["password"] = self._config.get("password", "")
            kwargs["authSource"] = self.options.get("auth_source", "admin")
        client: MongoClient[dict[str, Any]] = MongoClient(**kwargs)
        try:
            client.admin.command("ping")
        except OperationFailure as e:
            client.close()
            if e.code == _AUTH_FAILED:
                raise CredentialError(
                    f"authentication failed for {self.database_id} at {self.host}:{self.port}",
                    self.database_id,
                ) from e
            raise DatabaseConnectionError(
                f"cannot connect to {self.host}:{self.port} ({self.database_id}): {e}",
                self.database_id,
            ) from e
        except (ServerSelectionTimeoutError, ConnectionFailure) as e:
            client.close()
            raise DatabaseConnectionError(
                f"cannot connect to {self.host}:{self.port} ({self.database_id}): {e}",
                self.database_id,
            ) from e
        self._client = client

    def _close(self) -> None:
        if self._client is not None:
            try:
                self._client.close()
            finally:
                self._client = None

    def _execute(self, payload: Payload, spec: QuerySpec) -> int:
        if not isinstance(payload, MongoOperation):
            raise ConfigError(f"query '{spec.label}' needs a document descriptor for mongodb")
        validate_operation(payload, spec.label)
        collection = self._db[payload.collection]
        try:
            if payload.operation == "find":
                return sum(1 for _ in collection.find(payload.filter))
            if payload.operation == "insert_many":
                # insert_many mutates its input by adding _id.
                docs = [dict(d) for d in payload.documents]
                return len(collection.insert_many(docs).inserted_ids)
            if payload.operation == "update_many":
                return int(collection.update_many(payload.filter, payload.update).matched_count)
            return int(collection.delete_many(payload.filter).deleted_count)
        except (AutoReconnect, ServerSelectionTimeoutError) as e:
            raise DatabaseConnectionError(
                f"connection to {self.host}:{self.port} lost: {e}", self.database_id
            ) from e
        except PyMongoError as e:
            details = getattr(e, "details", None) or {}
            message = details.get("errmsg") or str(e)
            code = getattr(e, "code", None)
            if code is not None:
                message = f"{message}\nError Code: {code}"
            raise self.query_error(
                f"{message}\nOperation: {payload.operation} on {payload.collection}", spec
            ) from e

    def create_storage(self, schema: DatasetSchema, table: str, replace: bool = False) -> None:
        db = self._db
        if table in db.list_collection_names():
            if not replace:
                raise StorageExistsError(
                    f"collection {table} already exists in {self.database_id}"
                )
            db.drop_collection(table)
            logger.info(f"Dropped collection {table} in {self.database_id}")
        db.create_collection(table)
        db[SCHEMA_COLLECTION].replace_one(
            {"_id": table}, {"_id": table, **schema.to_dict()}, upsert=True
        )
        logger.info(f"Created collection {table} in {self.database_id}")

    def insert_rows(
        self,
        table: str,
        schema: DatasetSchema,
        rows: Sequence[Mapping[str, Any]],
        first_key: int,
    ) -> int:
        if not rows:
            return 0
        docs = [
            {"_id": first_key + i, **{k: v for k, v in row.items() if v is not None}}
            for i, row in enumerate(rows)
        ]
        result = self._db[table].insert_many(docs, ordered=True)
        return len(result.inserted_ids)

    def count_rows(self, table: str) -> int:
        return int(self._db[table].count_documents({}))
