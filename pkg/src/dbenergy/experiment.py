"""
Experiment protocol: repeated trials in a shuffled order with an idle
cooldown after every job, followed by per-cell aggregation.
"""

from __future__ import annotations

import hashlib
import logging
import random
import statistics
import time
import uuid
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import partial
from typing import NamedTuple

import psutil

from dbenergy.adapters.base import Adapter
from dbenergy.energy import RAM_POWER_W_PER_GB
from dbenergy.errors import (
    ConfigError,
    DatabaseConnectionError,
    InsufficientDataError,
    MeasurementError,
    TrackingError,
)
from dbenergy.sampler import Sampler
from dbenergy.tracker import Tracker
from dbenergy.types import (
    CellStats,
    CpuIdentity,
    DbConfig,
    DbKind,
    QuerySpec,
    SamplerConfig,
    TdpResolution,
    TrialRecord,
)

logger = logging.getLogger(__name__)

DEFAULT_TRIALS = 10
DEFAULT_COOLDOWN_S = 30.0
BUSY_THRESHOLD_PERCENT = 10.0
MAX_SEED = 2**64 - 1

AggregateResult = dict[tuple[str, str], CellStats]


class ScheduledJob(NamedTuple):
    trial_index: int
    database_id: str
    query_label: str


@dataclass(frozen=True)
class JobFailure:
    """A scheduled job that produced no measurement."""

    trial_index: int
    database_id: str
    query_label: str
    error: str
    exit_code: int = MeasurementError.exit_code


@dataclass
class ExperimentPlan:
    """
    Databases, queries and protocol parameters of one experiment.

    Raises:
        ConfigError: On construction, if the plan is inconsistent.
    """

    databases: list[DbConfig]
    queries: list[QuerySpec]
    trials: int = DEFAULT_TRIALS
    cooldown_s: float = DEFAULT_COOLDOWN_S
    rng_seed: int = 0
    sampler: SamplerConfig = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.cooldown_s < 0:
            raise ConfigError(f"cooldown must be >= 0, got {self.cooldown_s}")
        if not 0 <= self.rng_seed <= MAX_SEED:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.rng_seed}")
        if not self.databases or not self.queries:
            raise ConfigError("an experiment needs at least one database and one query")
        ids = [db["database_id"] for db in self.databases]
        if len(set(ids)) != len(ids):
            raise ConfigError("database ids in a plan must be unique")
        labels = [q.label for q in self.queries]
        if len(set(labels)) != len(labels):
            raise ConfigError("query labels in a plan must be unique")
        for db in self.databases:
            kind = DbKind(db["kind"])
            for query in self.queries:
                if kind not in query.payloads:
                    raise ConfigError(
                        f"query '{query.label}' has no payload for {kind.value} "
                        f"(database {db['database_id']})"
                    )

    @property
    def jobs(self) -> list[tuple[str, str]]:
        """Every (database_id, query_label) pair, in plan order."""
        return [(db["database_id"], q.label) for db in self.databases for q in self.queries]

    def query(self, label: str) -> QuerySpec:
        return next(q for q in self.queries if q.label == label)


def trial_seed(rng_seed: int, trial_index: int) -> int:
    """Derive the generator seed for one trial from (seed, trial)."""
    digest = hashlib.sha256(f"{rng_seed}:{trial_index}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def build_schedule(plan: ExperimentPlan) -> list[ScheduledJob]:
    """
    Order all jobs of all trials.

    Trials run in increasing order; within a trial the job set is shuffled
    (Fisher-Yates) by a generator seeded from (rng_seed, trial), so any
    single trial can be regenerated on its own.
    """
    schedule: list[ScheduledJob] = []
    for t in range(1, plan.trials + 1):
        jobs = plan.jobs
        random.Random(trial_seed(plan.rng_seed, t)).shuffle(jobs)
        schedule.extend(ScheduledJob(t, db, label) for db, label in jobs)
    return schedule


def warn_if_busy(
    threshold_percent: float = BUSY_THRESHOLD_PERCENT,
    interval_s: float = 0.5,
) -> float:
    """
    Measure host CPU load and warn when it exceeds the threshold.

    Returns:
        The observed load in percent
    """
    load = float(psutil.cpu_percent(interval=interval_s))
    if load > threshold_percent:
        logger.warning(
            f"Host CPU is {load:.1f}% busy before the run (threshold {threshold_percent:.0f}%); "
            "background load will inflate measurements"
        )
    return load


class ExperimentRunner:
    """
    Runs a plan's schedule against connected adapters.

    Failed jobs are logged, recorded in `failures` and skipped. A connection
    loss marks the database dead: its remaining jobs fail without running.

    Usage:
        runner = ExperimentRunner(plan, adapters, tracker)
        records = runner.run()
    """

    def __init__(
        self,
        plan: ExperimentPlan,
        adapters: Mapping[str, Adapter],
        tracker: Tracker,
        sleep: Callable[[float], None] = time.sleep,
        run_id: str | None = None,
    ) -> None:
        missing = [db["database_id"] for db in plan.databases if db["database_id"] not in adapters]
        if missing:
            raise ConfigError(f"no connection for database(s): {', '.join(missing)}")
        self._plan = plan
        self._adapters = adapters
        self._tracker = tracker
        self._sleep = sleep
        self.run_id = run_id or uuid.uuid4().hex[:12]
        self.failures: list[JobFailure] = []
        self.dead: dict[str, str] = {}

    def _fail(self, job: ScheduledJob, error: str, exit_code: int) -> None:
        self.failures.append(
            JobFailure(job.trial_index, job.database_id, job.query_label, error, exit_code)
        )

    def run(self) -> list[TrialRecord]:
        schedule = build_schedule(self._plan)
        records: list[TrialRecord] = []
        logger.info(
            f"Run {self.run_id}: {len(schedule)} jobs, {self._plan.trials} trials, "
            f"cooldown {self._plan.cooldown_s}s, seed {self._plan.rng_seed}"
        )
        for n, job in enumerate(schedule, start=1):
            if job.database_id in self.dead:
                self._fail(
                    job,
                    f"database unavailable: {self.dead[job.database_id]}",
                    DatabaseConnectionError.exit_code,
                )
                continue
            spec = self._plan.query(job.query_label)
            adapter = self._adapters[job.database_id]
            try:
                measurement = self._tracker.track(
                    partial(adapter.execute, spec), job.database_id, spec.label, spec.kind
                )
            except TrackingError as e:
                if isinstance(e.job_error, DatabaseConnectionError):
                    logger.error(f"Lost {job.database_id}; skipping its remaining jobs: {e}")
                    self.dead[job.database_id] = str(e.job_error)
                    adapter.close()
                else:
                    logger.warning(f"Job failed, skipping: {e}")
                self._fail(job, str(e), e.exit_code)
            except MeasurementError as e:
                logger.warning(f"Measurement failed for {job.database_id}/{spec.label}: {e}")
                self._fail(job, str(e), e.exit_code)
            else:
                records.append(TrialRecord(job.trial_index, measurement, self.run_id))
                logger.info(
                    f"[{n}/{len(schedule)}] trial {job.trial_index} "
                    f"{job.database_id}/{spec.label}: {measurement.total_energy_j:.4f} J "
                    f"in {measurement.duration_s:.3f}s"
                )
            if self._plan.cooldown_s > 0:
                self._sleep(self._plan.cooldown_s)
        if self.failures:
            logger.warning(f"{len(self.failures)} of {len(schedule)} jobs failed")
        return records


def run_experiment(
    plan: ExperimentPlan,
    adapters: Mapping[str, Adapter],
    sampler_factory: Callable[[], Sampler],
    tdp: TdpResolution,
    cpu: CpuIdentity,
    ram_power_w_per_gb: float = RAM_POWER_W_PER_GB,
    sleep: Callable[[float], None] = time.sleep,
    run_id: str | None = None,
) -> list[TrialRecord]:
    """
    Run the full protocol and return the successful trial records.

    Args:
        plan: Databases, queries and protocol parameters
        adapters: Connected adapters by database_id
        sampler_factory: Opens the sampler used for every job
        tdp: Resolved TDP of the host CPU
        cpu: Host CPU identity
        ram_power_w_per_gb: RAM power coefficient
        sleep: Cooldown function
        run_id: Identifier stamped on records (random when omitted)
    """
    sampler = sampler_factory()
    try:
        tracker = Tracker(sampler, tdp, cpu, ram_power_w_per_gb)
        runner = ExperimentRunner(plan, adapters, tracker, sleep=sleep, run_id=run_id)
        return runner.run()
    finally:
        sampler.close()


def aggregate(
    records: Iterable[TrialRecord],
    cells: Iterable[tuple[str, str]] = (),
) -> AggregateResult:
    """
    Per-cell means and sample standard deviation of total energy.

    Cells listed in `cells` without records are reported with n = 0 and
    null statistics. Standard deviation uses n - 1 and is 0 for n = 1.
    """
    grouped: dict[tuple[str, str], list[TrialRecord]] = {cell: [] for cell in cells}
    for record in records:
        m = record.measurement
        grouped.setdefault((m.database_id, m.query_label), []).append(record)

    result: AggregateResult = {}
    for (db, label), group in grouped.items():
        if not group:
            result[(db, label)] = CellStats(db, label, 0)
            continue
        totals = [r.measurement.total_energy_j for r in group]
        result[(db, label)] = CellStats(
            database_id=db,
            query_label=label,
            n=len(group),
            mean_cpu_j=statistics.fmean(r.measurement.cpu_energy_j for r in group),
            mean_ram_j=statistics.fmean(r.measurement.ram_energy_j for r in group),
            mean_total_j=statistics.fmean(totals),
            stddev_total_j=statistics.stdev(totals) if len(totals) > 1 else 0.0,
        )
    return result


def _populated(result: AggregateResult, query_label: str) -> list[CellStats]:
    return [
        c
        for c in result.values()
        if c.query_label == query_label and c.n >= 1 and c.mean_total_j is not None
    ]


def disparity(result: AggregateResult, query_label: str) -> float:
    """
    (max - min) / max of mean total energy across databases for one query.

    Raises:
        InsufficientDataError: If fewer than two databases have data.
    """
    means = [c.mean_total_j for c in _populated(result, query_label) if c.mean_total_j is not None]
    if len(means) < 2:
        raise InsufficientDataError(
            f"insufficient data: {len(means)} populated database(s) for '{query_label}'"
        )
    highest, lowest = max(means), min(means)
    if highest <= 0:
        return 0.0
    return (highest - lowest) / highest


def rank(result: AggregateResult, query_label: str) -> list[CellStats]:
    """Populated cells of a query ordered by mean total energy (ties by id)."""
    return sorted(
        _populated(result, query_label),
        key=lambda c: (c.mean_total_j or 0.0, c.database_id),
    )


def most_efficient(result: AggregateResult) -> dict[str, CellStats]:
    """Lowest-energy database per query label, for labels with data."""
    labels = list(dict.fromkeys(label for _, label in result))
    best: dict[str, CellStats] = {}
    for label in labels:
        ranked = rank(result, label)
        if ranked:
            best[label] = ranked[0]
    return best


def cells_of(plan: ExperimentPlan) -> Sequence[tuple[str, str]]:
    """All (database_id, query_label) cells of a plan, in plan order."""
    return plan.jobs
