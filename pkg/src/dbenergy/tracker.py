"""
Tracker - run one workload under a sampling window and turn it into a Measurement.
"""

from __future__ import annotations

import logging
import threading
from collections.abc import Callable
from datetime import datetime, timezone
from typing import Any

from dbenergy.energy import RAM_POWER_W_PER_GB, breakdown
from dbenergy.errors import ProbeError, TrackingError
from dbenergy.sampler import Sampler
from dbenergy.types import (
    CpuIdentity,
    Measurement,
    QueryKind,
    SampleSeries,
    TdpResolution,
)

logger = logging.getLogger(__name__)


class Tracker:
    """
    Measures the energy of a job with a dedicated sampling thread.

    The window opens before the job starts and closes after it returns.
    One tracker handles one measurement at a time.

    Usage:
        tracker = Tracker(sampler, tdp, cpu)
        m = tracker.track(lambda: adapter.execute(spec), "pg", "select_all", QueryKind.SELECT)
    """

    def __init__(
        self,
        sampler: Sampler,
        tdp: TdpResolution,
        cpu: CpuIdentity,
        ram_power_w_per_gb: float = RAM_POWER_W_PER_GB,
    ) -> None:
        self._sampler = sampler
        self._tdp = tdp
        self._cpu = cpu
        self._ram_power = ram_power_w_per_gb
        self._lock = threading.Lock()
        self.last_result: Any = None

    @property
    def sampler(self) -> Sampler:
        return self._sampler

    def track(
        self,
        job: Callable[[], Any],
        database_id: str,
        query_label: str,
        query_kind: QueryKind = QueryKind.RAW,
    ) -> Measurement:
        """
        Run job while sampling and return its Measurement.

        Raises:
            TrackingError: If the job raised; the partial series is discarded.
            ProbeError: If sampling failed; the job outcome is logged alongside.
            RuntimeError: If the tracker is already measuring.
        """
        if not self._lock.acquire(blocking=False):
            raise RuntimeError("tracker is already running a measurement")
        try:
            return self._track(job, database_id, query_label, query_kind)
        finally:
            self._lock.release()

    def _track(
        self,
        job: Callable[[], Any],
        database_id: str,
        query_label: str,
        query_kind: QueryKind,
    ) -> Measurement:
        stop = threading.Event()
        started = threading.Event()
        series_box: list[SampleSeries] = []
        error_box: list[BaseException] = []

        def sample() -> None:
            try:
                series_box.append(self._sampler.run_window(stop, started))
            except BaseException as e:  # re-raised on the caller's thread
                error_box.append(e)
                started.set()

        sampling = threading.Thread(
            target=sample, name=f"dbenergy-sampler-{database_id}", daemon=True
        )
        started_at = datetime.now(timezone.utc)
        self.last_result = None
        sampling.start()
        started.wait()
        if error_box:
            sampling.join()
            raise ProbeError(f"sampler failed to start: {error_box[0]}") from error_box[0]

        try:
            self.last_result = job()
        except Exception as e:
            logger.debug(f"Discarding partial series for {database_id}/{query_label}")
            raise TrackingError(f"job failed: {e}", database_id, query_label, e) from e
        finally:
            stop.set()
            sampling.join()

        if error_box:
            logger.error(
                f"Sampling failed for {database_id}/{query_label} (job completed successfully)"
            )
            err = error_box[0]
            if isinstance(err, ProbeError):
                raise err
            raise ProbeError(f"sampler failed: {err}") from err

        series = series_box[0]
        energy = breakdown(self._tdp.tdp_watts, series, self._ram_power)
        measurement = Measurement(
            database_id=database_id,
            query_label=query_label,
            query_kind=query_kind,
            started_at=started_at,
            duration_s=series.window_duration_s,
            cpu_energy_j=energy.cpu_energy_j,
            ram_energy_j=energy.ram_energy_j,
            total_energy_j=energy.total_energy_j,
            tdp_w=self._tdp.tdp_watts,
            tdp_match_kind=self._tdp.match_kind,
            core_count=self._cpu.core_count,
            sample_count=len(series),
            ram_scope=self._sampler.ram_scope,
        )
        logger.debug(
            f"{database_id}/{query_label}: {measurement.duration_s:.4f}s, "
            f"cpu {measurement.cpu_energy_j:.4f} J, ram {measurement.ram_energy_j:.4f} J"
        )
        return measurement
