"""
Dataset ingest: read a CSV, declare its schema, create storage in every
target and bulk-load the rows.
"""

from __future__ import annotations

import csv
import logging
from collections.abc import Callable, Iterable, Iterator, Mapping, Sequence
from contextlib import ExitStack, contextmanager
from dataclasses import dataclass
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path
from typing import Any

from dbenergy.adapters.base import Adapter
from dbenergy.config import read_json
from dbenergy.errors import ConfigError, DataError, DbEnergyError, SchemaValidationError
from dbenergy.types import ColumnSpec, ColumnType, DatasetSchema, DbKind

logger = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 500
SAMPLE_DATASETS = ("netflix", "sms")
SQL_KINDS = frozenset({DbKind.MYSQL, DbKind.POSTGRESQL})
_TRUE = {"true", "1"}
_FALSE = {"false", "0"}


@dataclass(frozen=True)
class Dataset:
    """Header and raw text rows of a CSV file."""

    header: list[str]
    rows: list[list[str]]


def read_dataset(path: str | Path) -> Dataset:
    """
    Read a UTF-8 CSV file with a header row.

    Raises:
        ConfigError: If the file does not exist or has no header.
        DataError: If a row's field count differs from the header's.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"dataset not found: {path}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"dataset {path} is empty (no header row)") from None
        rows: list[list[str]] = []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"line {reader.line_num}: expected {len(header)} fields, got {len(row)}"
                )
            rows.append(row)
    logger.info(f"Read {len(rows)} rows with {len(header)} columns from {path}")
    return Dataset(header=header, rows=rows)


def parse_schema(raw: Any) -> DatasetSchema:
    """
    Build a DatasetSchema from its decoded file form.

    Type names outside the five supported ones are treated as text.
    """
    if not isinstance(raw, Mapping) or not isinstance(raw.get("columns"), list):
        raise SchemaValidationError("schema needs a 'columns' list")
    columns: list[ColumnSpec] = []
    for i, item in enumerate(raw["columns"]):
        if not isinstance(item, Mapping):
            raise SchemaValidationError(f"columns[{i}] must be an object")
        name = str(item.get("name", "")).strip()
        type_name = str(item.get("type", ColumnType.TEXT.value)).lower()
        try:
            declared = ColumnType(type_name)
        except ValueError:
            logger.warning(f"Column {name!r}: unknown type {type_name!r}, using text")
            declared = ColumnType.TEXT
        columns.append(ColumnSpec(name, declared))
    primary_key = raw.get("primary_key", [])
    if not isinstance(primary_key, list):
        raise SchemaValidationError("primary_key must be a list of column names")
    schema = DatasetSchema(tuple(columns), tuple(str(k) for k in primary_key))
    _check_schema(schema)
    return schema


def load_schema(path: str | Path) -> DatasetSchema:
    """Load a schema file: {"columns": [{"name", "type"}], "primary_key": [...]}."""
    return parse_schema(read_json(path, "schema file"))


def _check_schema(schema: DatasetSchema) -> None:
    names = schema.column_names
    if any(not n for n in names):
        raise SchemaValidationError("column names must be nonempty")
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise SchemaValidationError(f"duplicate column names: {', '.join(dupes)}")
    unknown = [k for k in schema.primary_key if k not in names]
    if unknown:
        raise SchemaValidationError(f"primary key column not in schema: {', '.join(unknown)}")
    if len(set(schema.primary_key)) != len(schema.primary_key):
        raise SchemaValidationError("primary key lists a column twice")


def prompt_schema(
    header: Sequence[str],
    input_fn: Callable[[str], str] = input,
) -> DatasetSchema:
    """
    Ask for each column's type and the primary key.

    An empty answer keeps the default (text, no primary key); an unknown
    type name is asked again.
    """
    choices = "/".join(t.value for t in ColumnType)
    columns = []
    for name in header:
        while True:
            answer = input_fn(f"type of column {name!r} [{choices}] (text): ").strip().lower()
            if not answer:
                declared = ColumnType.TEXT
                break
            try:
                declared = ColumnType(answer)
                break
            except ValueError:
                logger.warning(f"Unknown type {answer!r}; choose one of {choices}")
        columns.append(ColumnSpec(name, declared))
    while True:
        answer = input_fn("primary key columns, comma-separated (none): ").strip()
        keys = tuple(k.strip() for k in answer.split(",") if k.strip())
        missing = [k for k in keys if k not in header]
        if not missing:
            break
        logger.warning(f"Not a column: {', '.join(missing)}")
    return DatasetSchema(tuple(columns), keys)


def validate_schema(
    schema: DatasetSchema,
    header: Sequence[str],
    require_primary_key: bool = False,
) -> None:
    """
    Check that the schema declares exactly the header's columns.

    Args:
        schema: Declared schema
        header: Dataset header
        require_primary_key: True when any SQL target is configured

    Raises:
        SchemaValidationError: Naming the offending column.
    """
    _check_schema(schema)
    declared = set(schema.column_names)
    for name in schema.column_names:
        if name not in header:
            raise SchemaValidationError(f"schema column {name!r} is not in the dataset header")
    for name in header:
        if name not in declared:
            raise SchemaValidationError(f"dataset column {name!r} is missing from the schema")
    if require_primary_key and not schema.primary_key:
        raise SchemaValidationError("a primary key is required when SQL targets are configured")


def _parse_timestamp(text: str) -> datetime:
    value = text.strip()
    if value[-1:] in ("Z", "z"):
        value = value[:-1] + "+00:00"
    parsed = datetime.fromisoformat(value)
    if parsed.tzinfo is not None:
        parsed = parsed.astimezone(timezone.utc).replace(tzinfo=None)
    return parsed


def coerce_value(text: str, declared: ColumnType) -> Any:
    """
    Convert CSV text to the declared type. Empty text is None.

    Timestamps accept RFC 3339 and are stored as naive UTC.

    Raises:
        ValueError: If the text does not fit the type.
    """
    if text == "":
        return None
    if declared is ColumnType.INTEGER:
        return int(text.strip())
    if declared is ColumnType.REAL:
        return float(text.strip())
    if declared is ColumnType.BOOLEAN:
        lowered = text.strip().lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if declared is ColumnType.TIMESTAMP:
        return _parse_timestamp(text)
    return text


def coerce_rows(
    schema: DatasetSchema,
    header: Sequence[str],
    rows: Iterable[Sequence[str]],
    first_row: int = 1,
) -> Iterator[dict[str, Any]]:
    """
    Coerce raw rows to typed records keyed by column name.

    Raises:
        DataError: "row R, column C: cannot coerce 'text' to type".
    """
    positions = {name: i for i, name in enumerate(header)}
    for row_number, row in enumerate(rows, start=first_row):
        record: dict[str, Any] = {}
        for column in schema.columns:
            text = row[positions[column.name]]
            try:
                record[column.name] = coerce_value(text, column.declared_type)
            except ValueError:
                raise DataError(
                    f"row {row_number}, column {column.name}: cannot coerce "
                    f"{text!r} to {column.declared_type.value}"
                ) from None
        yield record


def create_storage(
    conn: Adapter, schema: DatasetSchema, table_name: str, replace: bool = False
) -> None:
    """Create the dataset's table or collection on one target."""
    conn.create_storage(schema, table_name, replace=replace)


def bulk_load(
    conn: Adapter,
    schema: DatasetSchema,
    dataset: Dataset,
    table_name: str,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> int:
    """
    Insert all rows in batches and return the number inserted.

    Batches already inserted stay in place when a later row fails; the
    raised DataError carries that count in `inserted`.

    Raises:
        DataError: If a value cannot be coerced or the target rejects a batch.
    """
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    inserted = 0
    for start in range(0, len(dataset.rows), batch_size):
        chunk = dataset.rows[start : start + batch_size]
        try:
            records = list(coerce_rows(schema, dataset.header, chunk, first_row=start + 1))
        except DataError as e:
            raise DataError(f"{conn.database_id}: {e} ({inserted} rows inserted)", inserted) from e
        try:
            inserted += conn.insert_rows(table_name, schema, records, first_key=start + 1)
        except DbEnergyError:
            raise
        except Exception as e:
            raise DataError(
                f"{conn.database_id}: insert failed at row {start + 1} "
                f"({inserted} rows inserted): {e}",
                inserted,
            ) from e
        logger.debug(f"{conn.database_id}: inserted {inserted}/{len(dataset.rows)} rows")
    logger.info(f"Loaded {inserted} rows into {table_name} on {conn.database_id}")
    return inserted


def ingest_all(
    adapters: Iterable[Adapter],
    schema: DatasetSchema,
    dataset: Dataset,
    table_name: str,
    replace: bool = False,
    batch_size: int = DEFAULT_BATCH_SIZE,
) -> dict[str, int]:
    """
    Create storage and load the dataset on every target that supports ingest.

    Returns:
        Inserted row count by database_id
    """
    targets = list(adapters)
    require_pk = any(a.kind in SQL_KINDS for a in targets)
    validate_schema(schema, dataset.header, require_primary_key=require_pk)
    counts: dict[str, int] = {}
    for conn in targets:
        if not conn.supports_ingest:
            logger.warning(f"Skipping ingest for {conn.database_id}: {conn.kind.value} targets hold no data")
            continue
        create_storage(conn, schema, table_name, replace=replace)
        counts[conn.database_id] = bulk_load(conn, schema, dataset, table_name, batch_size)
        stored = conn.count_rows(table_name)
        if stored != counts[conn.database_id]:
            logger.warning(
                f"{conn.database_id}: {stored} rows stored, {counts[conn.database_id]} inserted"
            )
    return counts


@contextmanager
def bundled_sample(name: str = "netflix") -> Iterator[tuple[Path, Path]]:
    """
    Paths of a packaged sample dataset and its schema file.

    Each sample also ships a `sample_<name>.queries.json` with one query per
    CRUD kind.

    Usage:
        with bundled_sample("sms") as (csv_path, schema_path):
            dataset = read_dataset(csv_path)

    Raises:
        ConfigError: If no sample has that name.
    """
    if name not in SAMPLE_DATASETS:
        raise ConfigError(
            f"no bundled sample {name!r} (available: {', '.join(SAMPLE_DATASETS)})"
        )
    data = resources.files("dbenergy.data")
    with ExitStack() as stack:
        csv_path = stack.enter_context(resources.as_file(data / f"sample_{name}.csv"))
        schema_path = stack.enter_context(
            resources.as_file(data / f"sample_{name}.schema.json")
        )
        yield csv_path, schema_path
