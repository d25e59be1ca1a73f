"""
Tests for resource sampling: utilization math, scripted replay, and window
stamping under a fake clock.
"""

import os
import threading
from types import SimpleNamespace

import psutil
import pytest

from dbenergy.errors import SamplerConfigError
from dbenergy.sampler import (
    BYTES_PER_GB,
    ProbeSampler,
    ScriptedProbe,
    ScriptedSampler,
    open_sampler,
    utilization_fraction,
)
from dbenergy.types import CpuIdentity, RamScope, ResourceSample
from tests.conftest import CountdownStop, FakeClock, constant_script

FOUR_CORES = CpuIdentity("test cpu", 4)


def probe_sampler(raw_percent: float, ram_bytes: int = 2 * BYTES_PER_GB) -> ProbeSampler:
    """Probe sampler whose first CPU read is the baseline."""
    probe = ScriptedProbe([(0.0, ram_bytes), (raw_percent, ram_bytes)])
    return ProbeSampler({"interval_s": 0.1}, FOUR_CORES, probe)


class TestUtilization:
    """Tests for raw percent to fraction conversion."""

    def test_divides_by_cores(self):
        """Test 50% on a 4-core host."""
        assert probe_sampler(50.0).sample_once().cpu_utilization_fraction == 0.125

    def test_zero(self):
        """Test an idle reading."""
        assert probe_sampler(0.0).sample_once().cpu_utilization_fraction == 0.0

    def test_clamped_to_one(self):
        """Test that 480% on 4 cores clamps to 1.0."""
        assert probe_sampler(480.0).sample_once().cpu_utilization_fraction == 1.0

    def test_negative_clamped_to_zero(self):
        """Test the lower clamp."""
        assert utilization_fraction(-5.0, 2) == 0.0

    def test_ram_bytes_to_gb(self):
        """Test that bytes are divided by 2**30."""
        sample = probe_sampler(0.0, ram_bytes=3 * BYTES_PER_GB // 2).sample_once()
        assert sample.ram_allocated_gb == 1.5


class TestScriptedSampler:
    """Tests for ScriptedSampler replay."""

    def test_repeats_last_sample(self):
        """Test that an exhausted script keeps returning its last sample."""
        script = [ResourceSample(0.0, w, 1.0) for w in (0.1, 0.2, 0.3)]
        sampler = ScriptedSampler(script)
        readings = [sampler.sample_once().cpu_utilization_fraction for _ in range(5)]
        assert readings == [0.1, 0.2, 0.3, 0.3, 0.3]

    def test_single_sample_is_constant(self):
        """Test that a one-sample script behaves as a constant."""
        sampler = ScriptedSampler(constant_script(0.5, 8.0))
        assert {sampler.sample_once() for _ in range(4)} == {ResourceSample(0.0, 0.5, 8.0)}

    def test_empty_script(self):
        """Test that an empty script is rejected."""
        with pytest.raises(ValueError):
            ScriptedSampler([])


class TestRunWindow:
    """Tests for Sampler.run_window() with an injected clock."""

    def make(self, clock: FakeClock, interval_s: float = 0.1) -> ScriptedSampler:
        return ScriptedSampler(constant_script(), {"interval_s": interval_s}, clock=clock)

    def test_samples_stamped_at_interval_starts(self, fake_clock):
        """Test that 3 ticks then stop give 4 samples starting at offset 0."""
        series = self.make(fake_clock).run_window(CountdownStop(fake_clock, ticks=3))
        offsets = [s.t_offset_s for s in series.samples]
        assert len(series) == 4
        assert offsets == pytest.approx([0.0, 0.1, 0.2, 0.3])
        assert series.window_duration_s == pytest.approx(0.4)

    def test_stop_before_first_tick(self, fake_clock):
        """Test that a window stopped at once still holds one sample."""
        stop = threading.Event()
        stop.set()
        series = self.make(fake_clock).run_window(stop)
        assert len(series) == 1
        assert series.samples[0].t_offset_s == 0.0
        assert series.window_duration_s > 0

    def test_two_second_window(self, fake_clock):
        """Test that a 2 s window at 0.1 s yields about 20 samples."""
        series = self.make(fake_clock).run_window(CountdownStop(fake_clock, ticks=19))
        assert 18 <= len(series) <= 22
        assert series.window_duration_s == pytest.approx(2.0)

    def test_offsets_strictly_increase(self, fake_clock):
        """Test offset ordering over a longer window."""
        series = self.make(fake_clock, interval_s=0.05).run_window(
            CountdownStop(fake_clock, ticks=40)
        )
        offsets = [s.t_offset_s for s in series.samples]
        assert all(b > a for a, b in zip(offsets, offsets[1:]))
        assert offsets[-1] <= series.window_duration_s

    def test_started_event_is_set(self, fake_clock):
        """Test that the started event fires."""
        started = threading.Event()
        self.make(fake_clock).run_window(CountdownStop(fake_clock, ticks=1), started)
        assert started.is_set()

    def test_idle_after_window(self, fake_clock):
        """Test that the sampler is reusable once a window closes."""
        sampler = self.make(fake_clock)
        sampler.run_window(CountdownStop(fake_clock, ticks=1))
        assert sampler.idle
        sampler.run_window(CountdownStop(fake_clock, ticks=1))


class TestOpenSampler:
    """Tests for open_sampler()."""

    def test_script_in_config(self):
        """Test that a script yields a scripted sampler."""
        sampler = open_sampler(
            {"script": [{"cpu_utilization_fraction": 0.25, "ram_allocated_gb": 2.0}]},
            FOUR_CORES,
        )
        assert isinstance(sampler, ScriptedSampler)
        assert sampler.sample_once() == ResourceSample(0.0, 0.25, 2.0)

    def test_explicit_probe(self):
        """Test that an explicit probe overrides scope resolution."""
        probe = ScriptedProbe([(0.0, BYTES_PER_GB), (200.0, BYTES_PER_GB)])
        sampler = open_sampler({}, FOUR_CORES, probe=probe)
        assert sampler.sample_once().cpu_utilization_fraction == 0.5

    def test_system_scope(self):
        """Test that the system probe reads live counters."""
        sampler = open_sampler({"ram_scope": "system"}, FOUR_CORES)
        sample = sampler.sample_once()
        assert sampler.ram_scope is RamScope.SYSTEM
        assert 0.0 <= sample.cpu_utilization_fraction <= 1.0
        assert sample.ram_allocated_gb > 0

    def test_missing_selector(self):
        """Test that process scope needs a process_selector."""
        with pytest.raises(SamplerConfigError, match="process_selector is required"):
            open_sampler({}, FOUR_CORES)

    def test_pid_selector(self):
        """Test that a pid selector observes that process."""
        sampler = open_sampler({"process_selector": str(os.getpid())}, FOUR_CORES)
        assert sampler.ram_scope is RamScope.PROCESS
        assert sampler.sample_once().ram_allocated_gb > 0

    def test_cpu_is_host_wide_in_every_scope(self, monkeypatch):
        """Test that process and system scope report the same CPU fraction."""
        monkeypatch.setattr(psutil, "cpu_percent", lambda interval=None: 80.0)
        monkeypatch.setattr(psutil.Process, "cpu_percent", lambda self, interval=None: 0.0)
        system = open_sampler({"ram_scope": "system"}, FOUR_CORES)
        process = open_sampler({"process_selector": str(os.getpid())}, FOUR_CORES)
        assert system.sample_once().cpu_utilization_fraction == 0.2
        assert process.sample_once().cpu_utilization_fraction == 0.2

    def test_selector_matches_several(self, monkeypatch):
        """Test that an ambiguous name lists every candidate pid."""
        procs = [SimpleNamespace(pid=pid, info={"pid": pid, "name": "mysqld"}) for pid in (4101, 4102)]
        monkeypatch.setattr(psutil, "process_iter", lambda attrs=None: iter(procs))
        with pytest.raises(SamplerConfigError, match=r"matches 2 processes \(pids: 4101, 4102\)"):
            open_sampler({"process_selector": "mysqld"}, FOUR_CORES)

    def test_selector_without_match(self):
        """Test that a selector matching no process is rejected."""
        with pytest.raises(SamplerConfigError, match="no process matches"):
            open_sampler({"process_selector": "dbenergy-no-such-process"}, FOUR_CORES)

    def test_non_positive_interval(self):
        """Test that interval_s must be positive."""
        with pytest.raises(SamplerConfigError, match="interval_s"):
            open_sampler({"interval_s": 0, "script": [{"cpu_utilization_fraction": 0.1}]}, FOUR_CORES)
