"""Type definitions for dbenergy."""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, TypedDict


class DbKind(str, Enum):
    """Supported database target kinds."""

    MYSQL = "mysql"
    POSTGRESQL = "postgresql"
    MONGODB = "mongodb"
    COUCHBASE = "couchbase"
    SHELL = "shell"
    MOCK = "mock"


class QueryKind(str, Enum):
    """CRUD class of a measured query."""

    SELECT = "select"
    INSERT = "insert"
    UPDATE = "update"
    DELETE = "delete"
    RAW = "raw"


class RamScope(str, Enum):
    """Whose allocated memory is charged to a measurement."""

    PROCESS = "process"
    SYSTEM = "system"


class MatchKind(str, Enum):
    """How a TDP value was resolved."""

    EXACT = "exact"
    FUZZY = "fuzzy"
    FALLBACK = "fallback"


class ColumnType(str, Enum):
    """Declared dataset column types."""

    INTEGER = "integer"
    REAL = "real"
    TEXT = "text"
    BOOLEAN = "boolean"
    TIMESTAMP = "timestamp"


class DbConfig(TypedDict, total=False):
    """Connection parameters of one database target."""

    database_id: str
    kind: str
    host: str
    port: int
    username: str
    password: str
    database_name: str  # bucket name for couchbase
    options: dict[str, str]


class SamplerConfig(TypedDict, total=False):
    """Resource sampler configuration."""

    interval_s: float  # default 0.1
    ram_scope: str  # "process" (default) or "system"
    process_selector: str | None  # process name or pid
    script: list[dict[str, float]]  # replaces the OS probe when present


class ToolConfig(TypedDict, total=False):
    """Top-level tool configuration file."""

    databases: list[DbConfig]
    sampler: SamplerConfig
    tdp_registry_path: str | None
    table_name: str
    tdp_model: str | None
    ram_power_w_per_gb: float | None


@dataclass(frozen=True)
class MongoOperation:
    """Document-operation descriptor used as the MongoDB payload of a query."""

    collection: str
    operation: str  # find, insert_many, update_many, delete_many
    filter: dict[str, Any] = field(default_factory=dict)
    update: dict[str, Any] = field(default_factory=dict)
    documents: list[dict[str, Any]] = field(default_factory=list)


Payload = str | MongoOperation


@dataclass(frozen=True)
class QuerySpec:
    """A labeled query with one payload per database kind."""

    label: str
    kind: QueryKind
    payloads: dict[DbKind, Payload]

    def payload_for(self, kind: DbKind) -> Payload:
        """Return the payload for a database kind."""
        try:
            return self.payloads[kind]
        except KeyError:
            raise KeyError(f"query '{self.label}' has no payload for {kind.value}") from None


@dataclass(frozen=True)
class ExecutionStats:
    """Outcome of executing one query."""

    rows_affected: int
    wall_time_s: float


@dataclass(frozen=True)
class ResourceSample:
    """One observation of CPU utilization and allocated RAM."""

    t_offset_s: float
    cpu_utilization_fraction: float
    ram_allocated_gb: float

    def __post_init__(self) -> None:
        if self.t_offset_s < 0:
            raise ValueError(f"t_offset_s must be >= 0, got {self.t_offset_s}")
        if not 0.0 <= self.cpu_utilization_fraction <= 1.0:
            raise ValueError(
                f"cpu_utilization_fraction must be in [0, 1], got {self.cpu_utilization_fraction}"
            )
        if self.ram_allocated_gb < 0:
            raise ValueError(f"ram_allocated_gb must be >= 0, got {self.ram_allocated_gb}")


@dataclass(frozen=True)
class SampleSeries:
    """Samples taken over one measurement window."""

    samples: tuple[ResourceSample, ...]
    window_duration_s: float

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValueError("a sample series needs at least one sample")
        if self.window_duration_s <= 0:
            raise ValueError(f"window_duration_s must be > 0, got {self.window_duration_s}")
        offsets = [s.t_offset_s for s in self.samples]
        if any(b <= a for a, b in zip(offsets, offsets[1:])):
            raise ValueError("sample offsets must be strictly increasing")
        if offsets[-1] > self.window_duration_s:
            raise ValueError("last sample lies beyond the window")

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class CpuIdentity:
    """Host processor model and logical core count."""

    raw_model_string: str
    core_count: int

    def __post_init__(self) -> None:
        if self.core_count < 1:
            raise ValueError(f"core_count must be >= 1, got {self.core_count}")


@dataclass(frozen=True)
class TdpResolution:
    """Resolved thermal design power of a processor model."""

    tdp_watts: float
    match_kind: MatchKind
    matched_key: str | None
    score: float


@dataclass(frozen=True)
class EnergyBreakdown:
    """CPU, RAM and total energy in joules."""

    cpu_energy_j: float
    ram_energy_j: float
    total_energy_j: float


@dataclass(frozen=True)
class Measurement:
    """One tracked workload execution."""

    database_id: str
    query_label: str
    query_kind: QueryKind
    started_at: datetime
    duration_s: float
    cpu_energy_j: float
    ram_energy_j: float
    total_energy_j: float
    tdp_w: float
    tdp_match_kind: MatchKind
    core_count: int
    sample_count: int
    ram_scope: RamScope


@dataclass(frozen=True)
class TrialRecord:
    """A measurement tagged with its trial index and run."""

    trial_index: int
    measurement: Measurement
    run_id: str = ""


@dataclass(frozen=True)
class CellStats:
    """Aggregated energies for one (database, query) cell."""

    database_id: str
    query_label: str
    n: int
    mean_cpu_j: float | None = None
    mean_ram_j: float | None = None
    mean_total_j: float | None = None
    stddev_total_j: float | None = None


@dataclass(frozen=True)
class ColumnSpec:
    """One declared dataset column."""

    name: str
    declared_type: ColumnType


@dataclass(frozen=True)
class DatasetSchema:
    """User-declared dataset schema."""

    columns: tuple[ColumnSpec, ...]
    primary_key: tuple[str, ...] = ()

    @property
    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def to_dict(self) -> dict[str, Any]:
        """Schema in its file layout."""
        return {
            "columns": [{"name": c.name, "type": c.declared_type.value} for c in self.columns],
            "primary_key": list(self.primary_key),
        }
