"""
Pytest configuration and fixtures for dbenergy.

Provides fake clocks and stop signals for deterministic sampling windows,
scripted samplers, mock database configs, and JSON file writers. Live
database fixtures read their settings from the environment and only run
when DBENERGY_INTEGRATION=1.
"""

from __future__ import annotations

import json
import os
from collections.abc import Callable
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

import pytest

from dbenergy.config import get_mysql_config_from_env, get_pg_config_from_env
from dbenergy.sampler import ScriptedSampler
from dbenergy.types import (
    CellStats,
    CpuIdentity,
    DbConfig,
    MatchKind,
    Measurement,
    QueryKind,
    RamScope,
    ResourceSample,
    TdpResolution,
    TrialRecord,
)

INTEGRATION = os.environ.get("DBENERGY_INTEGRATION") == "1"


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    """Skip integration tests unless DBENERGY_INTEGRATION=1."""
    if INTEGRATION:
        return
    skip = pytest.mark.skip(reason="set DBENERGY_INTEGRATION=1 to run against live databases")
    for item in items:
        if "integration" in item.keywords:
            item.add_marker(skip)


class FakeClock:
    """Manually advanced monotonic clock."""

    def __init__(self, start: float = 0.0) -> None:
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += seconds


class CountdownStop:
    """
    Stop signal for a FakeClock: each wait() advances the clock by its
    timeout and reports "set" after `ticks` waits.
    """

    def __init__(self, clock: FakeClock, ticks: int) -> None:
        self._clock = clock
        self._ticks = ticks
        self.waits = 0

    def wait(self, timeout: float | None = None) -> bool:
        self._clock.advance(timeout or 0.0)
        self.waits += 1
        return self.waits > self._ticks

    def is_set(self) -> bool:
        return self.waits > self._ticks


def constant_script(w: float = 0.5, m: float = 1.0) -> list[ResourceSample]:
    """One-sample script: constant utilization and RAM."""
    return [ResourceSample(0.0, w, m)]


def make_record(
    database_id: str,
    query_label: str,
    total_j: float,
    trial_index: int = 1,
    run_id: str = "run1",
) -> TrialRecord:
    """Trial record whose total splits 80/20 into CPU and RAM."""
    measurement = Measurement(
        database_id=database_id,
        query_label=query_label,
        query_kind=QueryKind.SELECT,
        started_at=datetime(2024, 3, 1, 12, 0, 0, 123456, tzinfo=timezone.utc),
        duration_s=0.25,
        cpu_energy_j=total_j * 0.8,
        ram_energy_j=total_j * 0.2,
        total_energy_j=total_j,
        tdp_w=28.0,
        tdp_match_kind=MatchKind.EXACT,
        core_count=4,
        sample_count=3,
        ram_scope=RamScope.PROCESS,
    )
    return TrialRecord(trial_index, measurement, run_id)


def cells(means: dict[str, float], query_label: str = "q") -> dict[tuple[str, str], CellStats]:
    """Aggregate result with one populated cell per database."""
    return {
        (db, query_label): CellStats(db, query_label, 1, mean, 0.0, mean, 0.0)
        for db, mean in means.items()
    }


def write_json(path: Path, data: Any) -> Path:
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def mock_db(database_id: str, **options: Any) -> DbConfig:
    """Mock DbConfig with string options."""
    return {
        "database_id": database_id,
        "kind": "mock",
        "options": {k: str(v) for k, v in options.items()},
    }


@pytest.fixture
def fake_clock() -> FakeClock:
    return FakeClock()


@pytest.fixture
def cpu() -> CpuIdentity:
    """A 4-core host."""
    return CpuIdentity("Intel(R) Core(TM) i5-1135G7 CPU @ 2.40GHz", 4)


@pytest.fixture
def tdp_100() -> TdpResolution:
    return TdpResolution(100.0, MatchKind.FALLBACK, None, 0.0)


@pytest.fixture
def constant_sampler() -> Callable[..., ScriptedSampler]:
    """
    Factory for scripted samplers with a constant reading.

    Usage:
        def test_something(constant_sampler):
            sampler = constant_sampler(w=0.5, m=8.0)
    """

    def make(w: float = 0.5, m: float = 1.0, interval_s: float = 0.1) -> ScriptedSampler:
        return ScriptedSampler(constant_script(w, m), {"interval_s": interval_s})

    return make


@pytest.fixture
def query_doc() -> dict[str, Any]:
    """Query file content with four CRUD queries for mock targets."""
    return {
        "queries": [
            {"label": label, "kind": kind, "payloads": {"mock": f"{kind} payload"}}
            for label, kind in (
                ("q_select", "select"),
                ("q_insert", "insert"),
                ("q_update", "update"),
                ("q_delete", "delete"),
            )
        ]
    }


@pytest.fixture
def tool_config_doc() -> Callable[..., dict[str, Any]]:
    """
    Factory for tool config content over mock databases and a scripted sampler.

    Usage:
        doc = tool_config_doc(mock_db("fast", latency_s=0.01), mock_db("slow", latency_s=0.1))
    """

    def make(*databases: DbConfig, w: float = 0.5, m: float = 1.0) -> dict[str, Any]:
        return {
            "databases": list(databases) or [mock_db("mock_a")],
            "sampler": {
                "interval_s": 0.05,
                "script": [{"cpu_utilization_fraction": w, "ram_allocated_gb": m}],
            },
            "table_name": "dataset",
        }

    return make


@pytest.fixture
def json_file(tmp_path: Path) -> Callable[[str, Any], Path]:
    """
    Write JSON content under tmp_path and return the path.

    Usage:
        def test_something(json_file):
            path = json_file("config.json", {"databases": [...]})
    """

    def write(name: str, data: Any) -> Path:
        return write_json(tmp_path / name, data)

    return write


@pytest.fixture
def pg_config() -> DbConfig:
    """Live PostgreSQL target from PG* environment variables."""
    return get_pg_config_from_env()


@pytest.fixture
def mysql_config() -> DbConfig:
    """Live MySQL target from MYSQL_* environment variables."""
    return get_mysql_config_from_env()
