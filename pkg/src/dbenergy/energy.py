"""
TDP-based energy model.

    E_cpu = TDP x W_cpu x t
    E_ram = 0.375 W/GB x M_ram x t

Both integrals use the left-rectangle rule over a SampleSeries: each sample
holds until the next one, and the last sample extends to the end of the
window. A single-sample series reduces to the closed forms above.
"""

from __future__ import annotations

from collections.abc import Callable, Iterator

from dbenergy.types import EnergyBreakdown, ResourceSample, SampleSeries

# Specific power of DDR3/DDR4 modules, watts per gigabyte.
RAM_POWER_W_PER_GB = 0.375


def _intervals(series: SampleSeries) -> Iterator[tuple[ResourceSample, float]]:
    """Yield each sample with the duration it holds for."""
    samples = series.samples
    for current, following in zip(samples, samples[1:]):
        yield current, following.t_offset_s - current.t_offset_s
    yield samples[-1], series.window_duration_s - samples[-1].t_offset_s


def _integrate(series: SampleSeries, value: Callable[[ResourceSample], float]) -> float:
    return sum(value(sample) * dt for sample, dt in _intervals(series))


def cpu_energy(tdp_watts: float, series: SampleSeries) -> float:
    """CPU energy in joules: sum of tdp x w_i x dt_i."""
    if not tdp_watts > 0:
        raise ValueError(f"tdp_watts must be > 0, got {tdp_watts}")
    return tdp_watts * _integrate(series, lambda s: s.cpu_utilization_fraction)


def ram_energy(series: SampleSeries, w_per_gb: float = RAM_POWER_W_PER_GB) -> float:
    """RAM energy in joules: sum of 0.375 x m_i x dt_i."""
    return w_per_gb * _integrate(series, lambda s: s.ram_allocated_gb)


def breakdown(
    tdp_watts: float,
    series: SampleSeries,
    ram_power_w_per_gb: float = RAM_POWER_W_PER_GB,
) -> EnergyBreakdown:
    """
    Compute CPU, RAM and total energy for a window.

    Args:
        tdp_watts: Processor thermal design power
        series: Samples collected over the window
        ram_power_w_per_gb: RAM power constant; callers that override the
            default must record the value in run metadata
    """
    cpu = cpu_energy(tdp_watts, series)
    ram = ram_energy(series, ram_power_w_per_gb)
    return EnergyBreakdown(cpu_energy_j=cpu, ram_energy_j=ram, total_energy_j=cpu + ram)
