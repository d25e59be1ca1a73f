"""
Result files and comparison tables.

measurements.csv holds one row per successful trial, aggregate.csv one row
per (database, query) cell, run_meta.json the context of the run.
"""

from __future__ import annotations

import csv
import json
import logging
from collections.abc import Iterable, Mapping
from datetime import datetime, timezone
from decimal import Decimal
from pathlib import Path
from typing import Any

from tabulate import tabulate

from dbenergy.errors import ConfigError, InsufficientDataError, ReportFormatError
from dbenergy.experiment import AggregateResult, disparity, most_efficient, rank
from dbenergy.types import MatchKind, Measurement, QueryKind, RamScope, TrialRecord

logger = logging.getLogger(__name__)

MEASUREMENTS_FILE = "measurements.csv"
AGGREGATE_FILE = "aggregate.csv"
RUN_META_FILE = "run_meta.json"

MEASUREMENT_COLUMNS = [
    "run_id",
    "trial",
    "database",
    "query_label",
    "query_kind",
    "start_timestamp",
    "duration_s",
    "cpu_energy_j",
    "ram_energy_j",
    "total_energy_j",
    "tdp_w",
    "tdp_match_kind",
    "core_count",
    "sample_count",
    "ram_scope",
]
AGGREGATE_COLUMNS = [
    "database",
    "query_label",
    "mean_cpu_j",
    "mean_ram_j",
    "mean_total_j",
    "stddev_total_j",
    "n",
]


def format_float(value: float) -> str:
    """Shortest round-trip decimal, always positional (no exponent)."""
    return format(Decimal(repr(float(value))), "f")


def format_timestamp(value: datetime) -> str:
    """RFC 3339 UTC with microseconds and a Z suffix."""
    if value.tzinfo is None:
        value = value.replace(tzinfo=timezone.utc)
    text = value.astimezone(timezone.utc).isoformat(timespec="microseconds")
    return text.replace("+00:00", "Z")


def parse_timestamp(text: str) -> datetime:
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    parsed = datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        raise ValueError("timestamp without offset")
    return parsed


def _open_for_write(path: Path) -> Any:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return path.open("w", newline="", encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}") from e


def measurement_row(record: TrialRecord) -> list[str]:
    m = record.measurement
    return [
        record.run_id,
        str(record.trial_index),
        m.database_id,
        m.query_label,
        m.query_kind.value,
        format_timestamp(m.started_at),
        format_float(m.duration_s),
        format_float(m.cpu_energy_j),
        format_float(m.ram_energy_j),
        format_float(m.total_energy_j),
        format_float(m.tdp_w),
        m.tdp_match_kind.value,
        str(m.core_count),
        str(m.sample_count),
        m.ram_scope.value,
    ]


def write_measurements_csv(records: Iterable[TrialRecord], path: str | Path) -> int:
    """
    Write the header and one row per record, in the given order.

    Returns:
        Number of rows written
    """
    path = Path(path)
    count = 0
    with _open_for_write(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(MEASUREMENT_COLUMNS)
        for record in records:
            writer.writerow(measurement_row(record))
            count += 1
    logger.info(f"Wrote {count} measurements to {path}")
    return count


def _parse_record(row: dict[str, str]) -> TrialRecord:
    measurement = Measurement(
        database_id=row["database"],
        query_label=row["query_label"],
        query_kind=QueryKind(row["query_kind"]),
        started_at=parse_timestamp(row["start_timestamp"]),
        duration_s=float(row["duration_s"]),
        cpu_energy_j=float(row["cpu_energy_j"]),
        ram_energy_j=float(row["ram_energy_j"]),
        total_energy_j=float(row["total_energy_j"]),
        tdp_w=float(row["tdp_w"]),
        tdp_match_kind=MatchKind(row["tdp_match_kind"]),
        core_count=int(row["core_count"]),
        sample_count=int(row["sample_count"]),
        ram_scope=RamScope(row["ram_scope"]),
    )
    return TrialRecord(int(row["trial"]), measurement, row["run_id"])


def read_measurements_csv(path: str | Path) -> list[TrialRecord]:
    """
    Parse a measurements file written by write_measurements_csv.

    Raises:
        ConfigError: If the file does not exist.
        ReportFormatError: On unexpected columns or an unparsable field,
            naming the line.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except FileNotFoundError:
        raise ConfigError(f"measurements file not found: {path}") from None
    records: list[TrialRecord] = []
    with fh:
        reader = csv.reader(fh)
        header = next(reader, [])
        if header != MEASUREMENT_COLUMNS:
            raise ReportFormatError(
                f"{path}: unexpected columns {header}; expected order: "
                f"{', '.join(MEASUREMENT_COLUMNS)}"
            )
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != len(MEASUREMENT_COLUMNS):
                raise ReportFormatError(
                    f"line {line}: expected {len(MEASUREMENT_COLUMNS)} fields, got {len(row)}"
                )
            try:
                records.append(_parse_record(dict(zip(MEASUREMENT_COLUMNS, row))))
            except ValueError as e:
                raise ReportFormatError(f"line {line}: {e}") from e
    return records


def write_aggregate_csv(result: AggregateResult, path: str | Path) -> int:
    """Write one row per cell; statistics of empty cells are left blank."""
    path = Path(path)

    def cell(value: float | None) -> str:
        return "" if value is None else format_float(value)

    with _open_for_write(path) as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_COLUMNS)
        for stats in result.values():
            writer.writerow(
                [
                    stats.database_id,
                    stats.query_label,
                    cell(stats.mean_cpu_j),
                    cell(stats.mean_ram_j),
                    cell(stats.mean_total_j),
                    cell(stats.stddev_total_j),
                    str(stats.n),
                ]
            )
    logger.info(f"Wrote {len(result)} aggregate rows to {path}")
    return len(result)


def write_run_meta(meta: Mapping[str, Any], path: str | Path) -> None:
    """Write the run metadata sidecar as JSON."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(meta, indent=2, default=str) + "\n", encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot write {path}: {e}") from e
    logger.info(f"Wrote run metadata to {path}")


def render_comparison(result: AggregateResult, query_label: str) -> str:
    """
    Table of per-database means for one query.

    The lowest mean total is marked with '*'. A final `disparity: P%` line
    follows when at least two databases have data.

    Raises:
        InsufficientDataError: If no database has data for the query.
    """
    cells = [c for c in result.values() if c.query_label == query_label and c.n >= 1]
    if not cells:
        raise InsufficientDataError(f"insufficient data: no measurements for '{query_label}'")
    best = rank(result, query_label)[0]
    rows = [
        [
            "*" if c is best else "",
            c.database_id,
            c.mean_cpu_j,
            c.mean_ram_j,
            c.mean_total_j,
            c.n,
        ]
        for c in cells
    ]
    table = tabulate(
        rows,
        headers=["", "database", "mean CPU (J)", "mean RAM (J)", "mean total (J)", "n"],
        floatfmt=".6f",
    )
    lines = [f"query: {query_label}", table]
    if len(cells) >= 2:
        lines.append(f"disparity: {100 * disparity(result, query_label):.1f}%")
    return "\n".join(lines)


def render_summary(result: AggregateResult) -> str:
    """One row per query: the most efficient database and the disparity."""
    rows = []
    for label, best in most_efficient(result).items():
        try:
            spread = f"{100 * disparity(result, label):.1f}%"
        except InsufficientDataError:
            spread = "-"
        rows.append([label, best.database_id, best.mean_total_j, spread])
    return tabulate(
        rows,
        headers=["query", "most efficient", "mean total (J)", "disparity"],
        floatfmt=".6f",
    )
