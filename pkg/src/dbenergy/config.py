"""
Configuration loading for dbenergy.

Reads the JSON tool config and query files into typed structures, resolves
`env:VARNAME` secrets, and applies per-kind defaults.
"""

from __future__ import annotations

import json
import logging
import os
from collections.abc import Mapping
from pathlib import Path
from typing import Any

from dbenergy.adapters.base import DEFAULT_PORTS
from dbenergy.adapters.mongodb import validate_operation
from dbenergy.errors import ConfigError
from dbenergy.sampler import DEFAULT_INTERVAL_S
from dbenergy.types import (
    DbConfig,
    DbKind,
    MongoOperation,
    Payload,
    QueryKind,
    QuerySpec,
    RamScope,
    SamplerConfig,
    ToolConfig,
)

logger = logging.getLogger(__name__)

DEFAULT_TABLE_NAME = "dataset"
ENV_PREFIX = "env:"
_TEXT_KINDS = {DbKind.MYSQL, DbKind.POSTGRESQL, DbKind.COUCHBASE, DbKind.SHELL, DbKind.MOCK}


def read_json(path: str | Path, what: str) -> Any:
    """
    Parse a JSON file.

    Raises:
        ConfigError: If the file is missing or not valid JSON.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"{what} not found: {path}") from None
    except OSError as e:
        raise ConfigError(f"cannot read {what} {path}: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{what} {path} is not valid JSON (line {e.lineno}): {e.msg}") from e


def resolve_secret(value: str, field: str) -> str:
    """
    Resolve an `env:VARNAME` reference.

    Raises:
        ConfigError: If the referenced variable is unset.
    """
    if not value.startswith(ENV_PREFIX):
        return value
    name = value[len(ENV_PREFIX) :]
    try:
        return os.environ[name]
    except KeyError:
        raise ConfigError(f"{field} references unset environment variable {name}") from None


def _number(value: Any, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{field} must be a number, got {value!r}")
    return float(value)


def parse_db_config(raw: Any, index: int) -> DbConfig:
    """Validate one database entry and apply defaults."""
    if not isinstance(raw, Mapping):
        raise ConfigError(f"databases[{index}] must be an object")
    database_id = raw.get("database_id")
    if not isinstance(database_id, str) or not database_id.strip():
        raise ConfigError(f"databases[{index}].database_id must be a nonempty string")
    try:
        kind = DbKind(raw.get("kind"))
    except ValueError:
        supported = ", ".join(k.value for k in DbKind)
        raise ConfigError(
            f"database {database_id}: unsupported kind {raw.get('kind')!r} (supported: {supported})"
        ) from None

    port = raw.get("port", DEFAULT_PORTS.get(kind, 0))
    if isinstance(port, bool) or not isinstance(port, int) or not 0 <= port <= 65535:
        raise ConfigError(f"database {database_id}: port must be an integer in 0..65535")
    options = raw.get("options", {})
    if not isinstance(options, Mapping):
        raise ConfigError(f"database {database_id}: options must be an object")

    config: DbConfig = {
        "database_id": database_id,
        "kind": kind.value,
        "host": str(raw.get("host", "localhost")),
        "port": port,
        "options": {str(k): str(v) for k, v in options.items()},
    }
    for field in ("username", "database_name"):
        if field in raw:
            config[field] = str(raw[field])  # type: ignore[literal-required]
    if "password" in raw:
        config["password"] = resolve_secret(str(raw["password"]), f"database {database_id}.password")
    return config


def parse_sampler_config(raw: Any) -> SamplerConfig:
    """Validate the sampler section and apply defaults."""
    if raw is None:
        raw = {}
    if not isinstance(raw, Mapping):
        raise ConfigError("sampler must be an object")
    interval = _number(raw.get("interval_s", DEFAULT_INTERVAL_S), "sampler.interval_s")
    if interval <= 0:
        raise ConfigError(f"sampler.interval_s must be > 0, got {interval}")
    try:
        scope = RamScope(raw.get("ram_scope", RamScope.PROCESS.value))
    except ValueError:
        raise ConfigError(
            f"sampler.ram_scope must be 'process' or 'system', got {raw.get('ram_scope')!r}"
        ) from None

    config: SamplerConfig = {"interval_s": interval, "ram_scope": scope.value}
    selector = raw.get("process_selector")
    if selector is not None:
        config["process_selector"] = str(selector)

    script = raw.get("script")
    if script is not None:
        if not isinstance(script, list) or not script:
            raise ConfigError("sampler.script must be a nonempty list")
        items = []
        for i, item in enumerate(script):
            if not isinstance(item, Mapping):
                raise ConfigError(f"sampler.script[{i}] must be an object")
            field = f"sampler.script[{i}]"
            w = _number(item.get("cpu_utilization_fraction", 0.0), f"{field}.cpu_utilization_fraction")
            m = _number(item.get("ram_allocated_gb", 0.0), f"{field}.ram_allocated_gb")
            if not 0.0 <= w <= 1.0 or m < 0:
                raise ConfigError(f"{field} is out of range")
            items.append({"cpu_utilization_fraction": w, "ram_allocated_gb": m})
        config["script"] = items
    return config


def parse_tool_config(raw: Any) -> ToolConfig:
    """
    Validate a decoded tool config.

    Raises:
        ConfigError: On missing keys, duplicate ids, or bad values.
    """
    if not isinstance(raw, Mapping):
        raise ConfigError("config must be a JSON object")
    databases = raw.get("databases")
    if not isinstance(databases, list) or not databases:
        raise ConfigError("config needs a nonempty 'databases' list")
    parsed = [parse_db_config(entry, i) for i, entry in enumerate(databases)]
    seen: set[str] = set()
    for db in parsed:
        if db["database_id"] in seen:
            raise ConfigError(f"duplicate database_id {db['database_id']!r}")
        seen.add(db["database_id"])

    config: ToolConfig = {
        "databases": parsed,
        "sampler": parse_sampler_config(raw.get("sampler")),
        "tdp_registry_path": raw.get("tdp_registry_path"),
        "table_name": str(raw.get("table_name", DEFAULT_TABLE_NAME)),
        "tdp_model": raw.get("tdp_model"),
        "ram_power_w_per_gb": None,
    }
    if raw.get("ram_power_w_per_gb") is not None:
        power = _number(raw["ram_power_w_per_gb"], "ram_power_w_per_gb")
        if power <= 0:
            raise ConfigError("ram_power_w_per_gb must be > 0")
        config["ram_power_w_per_gb"] = power
    return config


def load_tool_config(path: str | Path) -> ToolConfig:
    """Load and validate the tool config file."""
    config = parse_tool_config(read_json(path, "config file"))
    ids = ", ".join(db["database_id"] for db in config["databases"])
    logger.debug(f"Loaded config {path} with databases: {ids}")
    return config


def _parse_payload(kind: DbKind, raw: Any, label: str) -> Payload:
    if kind in _TEXT_KINDS:
        if not isinstance(raw, str) or not raw.strip():
            raise ConfigError(f"query '{label}': payload for {kind.value} must be nonempty text")
        return raw
    if not isinstance(raw, Mapping):
        raise ConfigError(f"query '{label}': payload for mongodb must be an object")
    op = MongoOperation(
        collection=str(raw.get("collection", "")),
        operation=str(raw.get("operation", "")),
        filter=dict(raw.get("filter") or {}),
        update=dict(raw.get("update") or {}),
        documents=list(raw.get("documents") or []),
    )
    validate_operation(op, label)
    return op


def parse_queries(raw: Any) -> list[QuerySpec]:
    """Validate a decoded query file."""
    if not isinstance(raw, Mapping) or not isinstance(raw.get("queries"), list):
        raise ConfigError("query file needs a 'queries' list")
    specs: list[QuerySpec] = []
    seen: set[str] = set()
    for i, entry in enumerate(raw["queries"]):
        if not isinstance(entry, Mapping):
            raise ConfigError(f"queries[{i}] must be an object")
        label = entry.get("label")
        if not isinstance(label, str) or not label.strip():
            raise ConfigError(f"queries[{i}].label must be a nonempty string")
        if label in seen:
            raise ConfigError(f"duplicate query label {label!r}")
        seen.add(label)
        try:
            kind = QueryKind(entry.get("kind", QueryKind.RAW.value))
        except ValueError:
            raise ConfigError(f"query '{label}': unknown kind {entry.get('kind')!r}") from None
        payloads = entry.get("payloads")
        if not isinstance(payloads, Mapping) or not payloads:
            raise ConfigError(f"query '{label}' needs a nonempty 'payloads' object")
        parsed: dict[DbKind, Payload] = {}
        for key, value in payloads.items():
            try:
                db_kind = DbKind(key)
            except ValueError:
                raise ConfigError(f"query '{label}': unknown database kind {key!r}") from None
            parsed[db_kind] = _parse_payload(db_kind, value, label)
        specs.append(QuerySpec(label=label, kind=kind, payloads=parsed))
    if not specs:
        raise ConfigError("query file defines no queries")
    return specs


def load_query_file(path: str | Path) -> list[QuerySpec]:
    """Load and validate a query file."""
    return parse_queries(read_json(path, "query file"))


def get_pg_config_from_env(database_id: str = "postgresql") -> DbConfig:
    """
    PostgreSQL target from environment variables.

    Environment variables:
        PGHOST: host (default: localhost)
        PGPORT: port (default: 5432)
        PGDATABASE: database (default: postgres)
        PGUSER: user (default: postgres)
        PGPASSWORD: password (default: empty)
    """
    return {
        "database_id": database_id,
        "kind": DbKind.POSTGRESQL.value,
        "host": os.environ.get("PGHOST", "localhost"),
        "port": int(os.environ.get("PGPORT", "5432")),
        "database_name": os.environ.get("PGDATABASE", "postgres"),
        "username": os.environ.get("PGUSER", "postgres"),
        "password": os.environ.get("PGPASSWORD", ""),
        "options": {},
    }


def get_mysql_config_from_env(database_id: str = "mysql") -> DbConfig:
    """
    MySQL target from environment variables.

    Environment variables:
        MYSQL_HOST: host (default: localhost)
        MYSQL_PORT: port (default: 3306)
        MYSQL_DATABASE: database (default: dbenergy)
        MYSQL_USER: user (default: root)
        MYSQL_PASSWORD: password (default: empty)
    """
    return {
        "database_id": database_id,
        "kind": DbKind.MYSQL.value,
        "host": os.environ.get("MYSQL_HOST", "localhost"),
        "port": int(os.environ.get("MYSQL_PORT", "3306")),
        "database_name": os.environ.get("MYSQL_DATABASE", "dbenergy"),
        "username": os.environ.get("MYSQL_USER", "root"),
        "password": os.environ.get("MYSQL_PASSWORD", ""),
        "options": {},
    }
