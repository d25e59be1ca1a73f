"""
Resource sampling during a measurement window.

A Sampler turns probe readings (raw CPU percent since the previous read and
allocated bytes) into ResourceSample values and collects them into a
SampleSeries while a workload runs. Probes are pluggable: psutil-backed
probes read host CPU plus the RAM of the host or of one process, while
ScriptedProbe and ScriptedSampler replay fixed readings for tests and dry
runs.
"""

from __future__ import annotations

import logging
import threading
import time
from abc import ABC, abstractmethod
from collections.abc import Callable, Sequence
from dataclasses import replace
from typing import Protocol

import psutil

from dbenergy.errors import ProbeError, SamplerConfigError
from dbenergy.types import CpuIdentity, RamScope, ResourceSample, SampleSeries, SamplerConfig

logger = logging.getLogger(__name__)

DEFAULT_INTERVAL_S = 0.1
BYTES_PER_GB = 2**30
# Floor for windows whose clock did not visibly advance.
_MIN_WINDOW_S = 1e-9

Clock = Callable[[], float]


class StopSignal(Protocol):
    """Anything with threading.Event's wait/is_set semantics."""

    def wait(self, timeout: float | None = None) -> bool: ...

    def is_set(self) -> bool: ...


class ResourceProbe(Protocol):
    """Source of raw resource readings."""

    def cpu_percent(self) -> float:
        """Raw CPU utilization percent since the previous call."""
        ...

    def ram_bytes(self) -> int:
        """Currently allocated bytes of the observed scope."""
        ...


class SystemProbe:
    """Whole-host counters: psutil.cpu_percent and virtual_memory().used."""

    def cpu_percent(self) -> float:
        return float(psutil.cpu_percent(interval=None))

    def ram_bytes(self) -> int:
        return int(psutil.virtual_memory().used)


class ProcessProbe:
    """
    Host-wide CPU with the resident memory of one process.

    CPU is read from psutil.cpu_percent in every scope; only RAM follows
    the process.
    """

    def __init__(self, process: psutil.Process) -> None:
        self._process = process

    @property
    def pid(self) -> int:
        return self._process.pid

    def cpu_percent(self) -> float:
        return float(psutil.cpu_percent(interval=None))

    def ram_bytes(self) -> int:
        try:
            return int(self._process.memory_info().rss)
        except psutil.Error as e:
            raise ProbeError(f"cannot read memory of pid {self._process.pid}: {e}") from e


class ScriptedProbe:
    """
    Replays raw (cpu percent, bytes) readings; repeats the last one when exhausted.

    Usage:
        probe = ScriptedProbe([(50.0, 2 * 2**30), (480.0, 2 * 2**30)])
    """

    def __init__(self, readings: Sequence[tuple[float, int]]) -> None:
        if not readings:
            raise ValueError("scripted probe needs at least one reading")
        self._readings = list(readings)
        self._cpu_index = 0
        self._ram_index = 0

    def cpu_percent(self) -> float:
        value = self._readings[min(self._cpu_index, len(self._readings) - 1)][0]
        self._cpu_index += 1
        return value

    def ram_bytes(self) -> int:
        value = self._readings[min(self._ram_index, len(self._readings) - 1)][1]
        self._ram_index += 1
        return value


def utilization_fraction(raw_percent: float, core_count: int) -> float:
    """Divide a raw CPU percent by 100 x cores, clamped to [0, 1]."""
    return min(1.0, max(0.0, raw_percent / (100.0 * core_count)))


class Sampler(ABC):
    """
    Base sampler: one measurement window at a time.

    Subclasses provide _read(); run_window() drives it on an interval until
    the stop signal fires.
    """

    def __init__(
        self,
        config: SamplerConfig,
        cpu: CpuIdentity,
        clock: Clock = time.perf_counter,
    ) -> None:
        interval = float(config.get("interval_s", DEFAULT_INTERVAL_S))
        if not interval > 0:
            raise SamplerConfigError(f"interval_s must be > 0, got {interval}")
        self._config = config
        self._cpu = cpu
        self._clock = clock
        self._interval = interval
        self._busy = threading.Lock()

    @property
    def interval_s(self) -> float:
        return self._interval

    @property
    def ram_scope(self) -> RamScope:
        return RamScope(self._config.get("ram_scope", RamScope.PROCESS.value))

    @property
    def cpu(self) -> CpuIdentity:
        return self._cpu

    @property
    def idle(self) -> bool:
        """True when no window is running."""
        return not self._busy.locked()

    @abstractmethod
    def _read(self) -> ResourceSample:
        """Take one reading; t_offset_s is stamped by the caller."""

    def sample_once(self) -> ResourceSample:
        """Take a single reading outside any window."""
        return self._read()

    def run_window(
        self, stop_signal: StopSignal, started: threading.Event | None = None
    ) -> SampleSeries:
        """
        Sample every interval_s until stop_signal is set.

        Each reading is stamped with the start of the interval it covers, so
        the first sample sits at offset 0. A final reading is taken at stop,
        which guarantees at least one sample. If given, `started` is set once the
        window clock has been read.

        Raises:
            ProbeError: If a probe read fails; the window is abandoned.
            RuntimeError: If the sampler is already running a window.
        """
        if not self._busy.acquire(blocking=False):
            raise RuntimeError("sampler is already running a measurement window")
        try:
            return self._run_window(stop_signal, started)
        finally:
            self._busy.release()

    def _run_window(
        self, stop_signal: StopSignal, started: threading.Event | None
    ) -> SampleSeries:
        start = self._clock()
        if started is not None:
            started.set()
        interval_start = start
        samples: list[ResourceSample] = []

        def take() -> None:
            offset = interval_start - start
            if samples and offset <= samples[-1].t_offset_s:
                return
            samples.append(replace(self._read(), t_offset_s=offset))

        while True:
            timeout = max(0.0, interval_start + self._interval - self._clock())
            stopped = stop_signal.wait(timeout)
            now = self._clock()
            if stopped:
                if now > interval_start or not samples:
                    take()
                break
            take()
            interval_start = now

        duration = max(now - start, samples[-1].t_offset_s, _MIN_WINDOW_S)
        logger.debug(f"Window closed after {duration:.4f}s with {len(samples)} samples")
        return SampleSeries(tuple(samples), duration)

    def close(self) -> None:
        """Release probe resources (no-op by default)."""


class ProbeSampler(Sampler):
    """Sampler backed by a ResourceProbe."""

    def __init__(
        self,
        config: SamplerConfig,
        cpu: CpuIdentity,
        probe: ResourceProbe,
        clock: Clock = time.perf_counter,
    ) -> None:
        super().__init__(config, cpu, clock)
        self._probe = probe
        # First CPU read establishes the baseline for utilization deltas.
        try:
            self._probe.cpu_percent()
        except (OSError, psutil.Error) as e:
            raise ProbeError(f"cannot prime CPU probe: {e}") from e

    def _read(self) -> ResourceSample:
        try:
            raw = self._probe.cpu_percent()
            ram = self._probe.ram_bytes()
        except ProbeError:
            raise
        except (OSError, psutil.Error) as e:
            raise ProbeError(f"probe read failed: {e}") from e
        fraction = utilization_fraction(raw, self._cpu.core_count)
        logger.debug(f"raw cpu {raw:.1f}% -> {fraction:.4f}, ram {ram} B")
        return ResourceSample(0.0, fraction, max(0, ram) / BYTES_PER_GB)


class ScriptedSampler(Sampler):
    """
    Replays ResourceSample values verbatim, repeating the last when exhausted.

    Offsets from the script are returned by sample_once(); run_window()
    re-stamps them with window time.
    """

    def __init__(
        self,
        script: Sequence[ResourceSample],
        config: SamplerConfig | None = None,
        cpu: CpuIdentity | None = None,
        clock: Clock = time.perf_counter,
    ) -> None:
        if not script:
            raise ValueError("scripted sampler needs a nonempty script")
        super().__init__(config or {}, cpu or CpuIdentity("scripted", 1), clock)
        self._script = list(script)
        self._index = 0

    def _read(self) -> ResourceSample:
        sample = self._script[min(self._index, len(self._script) - 1)]
        self._index += 1
        return sample


def scripted_sampler(
    script: Sequence[ResourceSample],
    config: SamplerConfig | None = None,
    cpu: CpuIdentity | None = None,
    clock: Clock = time.perf_counter,
) -> ScriptedSampler:
    """
    Create a deterministic sampler replaying the given samples.

    Raises:
        ValueError: If the script is empty.
    """
    return ScriptedSampler(script, config, cpu, clock)


def _resolve_process(selector: str | None) -> psutil.Process:
    if not selector:
        raise SamplerConfigError(
            "sampler.process_selector is required when ram_scope is 'process' "
            "(name or pid of the database server), or set ram_scope to 'system'"
        )
    if selector.isdigit():
        try:
            return psutil.Process(int(selector))
        except psutil.NoSuchProcess:
            raise SamplerConfigError(f"no process matches selector {selector!r}") from None

    matches = []
    for proc in psutil.process_iter(["pid", "name"]):
        if proc.info.get("name") == selector:
            matches.append(proc)
    if not matches:
        raise SamplerConfigError(f"no process matches selector {selector!r}")
    if len(matches) > 1:
        pids = ", ".join(str(p.pid) for p in matches)
        raise SamplerConfigError(
            f"selector {selector!r} matches {len(matches)} processes (pids: {pids})"
        )
    return matches[0]


def open_sampler(
    config: SamplerConfig,
    cpu: CpuIdentity,
    probe: ResourceProbe | None = None,
    clock: Clock = time.perf_counter,
) -> Sampler:
    """
    Open a sampler for the configured RAM scope.

    A `script` key in the config yields a ScriptedSampler; an explicit probe
    overrides scope resolution.

    Raises:
        SamplerConfigError: If ram_scope is process and process_selector is
            missing, or matches zero or several processes.
    """
    script = config.get("script")
    if script:
        samples = [
            ResourceSample(
                0.0,
                float(item.get("cpu_utilization_fraction", 0.0)),
                float(item.get("ram_allocated_gb", 0.0)),
            )
            for item in script
        ]
        logger.info(f"Using scripted sampler with {len(samples)} samples")
        return ScriptedSampler(samples, config, cpu, clock)

    if probe is None:
        scope = RamScope(config.get("ram_scope", RamScope.PROCESS.value))
        if scope is RamScope.SYSTEM:
            probe = SystemProbe()
        else:
            process_probe = ProcessProbe(_resolve_process(config.get("process_selector")))
            logger.info(f"Sampling process pid {process_probe.pid}")
            probe = process_probe
    return ProbeSampler(config, cpu, probe, clock)
