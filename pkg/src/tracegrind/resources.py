"""Windowed resource request and consumption aggregation.

The trace horizon is tiled by half-open 5-minute windows anchored at the
trace start, 288 per day. A running task contributes its request in force
to every window its running interval overlaps; usage records contribute
their averages to the window containing their start. Daily figures are
the mean of the day's window sums.

Window sums are accumulated as exact float expansions so partition merges
and worker counts cannot perturb the result.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import fsum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .model import (
    EventType,
    InstanceEvent,
    InstanceType,
    MICROS_PER_DAY,
    MICROS_PER_SECOND,
    TERMINAL_EVENTS,
    UsageRecord,
    is_sentinel,
)
from .summation import grow_expansion

_SCHEDULE = int(EventType.SCHEDULE)
_TERMINAL_CODES = frozenset(int(t) for t in TERMINAL_EVENTS)


@dataclass(frozen=True)
class WindowGrid:
    """Half-open windows [origin + w*len, origin + (w+1)*len)."""

    origin: int
    window_us: int
    window_count: int
    end: Optional[int] = None

    @classmethod
    def for_horizon(
        cls, trace_start: int, trace_end: int, window_seconds: int = 300
    ) -> "WindowGrid":
        if trace_end <= trace_start:
            raise ValueError("empty horizon")
        window_us = window_seconds * MICROS_PER_SECOND
        count = (trace_end - trace_start) // window_us + 1
        return cls(trace_start, window_us, count, trace_end)

    @property
    def horizon_end(self) -> int:
        if self.end is not None:
            return self.end
        return self.window_start(self.window_count)

    @property
    def windows_per_day(self) -> int:
        return MICROS_PER_DAY // self.window_us

    @property
    def day_count(self) -> int:
        wpd = self.windows_per_day
        return (self.window_count + wpd - 1) // wpd

    def window_of(self, t: int) -> int:
        return (t - self.origin) // self.window_us

    def window_start(self, w: int) -> int:
        return self.origin + w * self.window_us

    def first_window_at_or_after(self, t: int) -> int:
        return -((self.origin - t) // self.window_us)


def window_index(t: int, grid: WindowGrid) -> int:
    """Window id for a timestamp; sentinel or out-of-range times are errors."""
    if is_sentinel(t):
        raise ValueError("sentinel timestamp has no window")
    w = grid.window_of(t)
    if w < 0 or w >= grid.window_count:
        raise ValueError(f"timestamp {t} outside the window grid")
    return w


class WindowedSums:
    """Per-window exact sums of a resource pair, fed by deltas.

    An interval contribution becomes +v at its first window and -v just
    past its last; window values are recovered as an exact running prefix,
    so the rounded per-window sums are independent of how contributions
    were split across partitions.
    """

    __slots__ = ("cpu_deltas", "memory_deltas")

    def __init__(self) -> None:
        self.cpu_deltas: Dict[int, List[float]] = {}
        self.memory_deltas: Dict[int, List[float]] = {}

    def _add(self, w: int, cpus: float, memory: float) -> None:
        if cpus:
            partials = self.cpu_deltas.get(w)
            if partials is None:
                partials = self.cpu_deltas[w] = []
            grow_expansion(partials, cpus)
        if memory:
            partials = self.memory_deltas.get(w)
            if partials is None:
                partials = self.memory_deltas[w] = []
            grow_expansion(partials, memory)

    def add_interval(self, w_lo: int, w_hi: int, cpus: float, memory: float) -> None:
        if w_hi <= w_lo:
            return
        self._add(w_lo, cpus, memory)
        self._add(w_hi, -cpus, -memory)

    def add_point(self, w: int, cpus: float, memory: float) -> None:
        self.add_interval(w, w + 1, cpus, memory)

    def merge(self, other: "WindowedSums") -> None:
        for w, partials in other.cpu_deltas.items():
            mine = self.cpu_deltas.get(w)
            if mine is None:
                self.cpu_deltas[w] = list(partials)
            else:
                for p in partials:
                    grow_expansion(mine, p)
        for w, partials in other.memory_deltas.items():
            mine = self.memory_deltas.get(w)
            if mine is None:
                self.memory_deltas[w] = list(partials)
            else:
                for p in partials:
                    grow_expansion(mine, p)

    def window_values(self, window_count: int) -> List[Tuple[float, float]]:
        """Correctly rounded (cpu, memory) sum per window."""
        values = []
        cpu_acc: List[float] = []
        mem_acc: List[float] = []
        cpu_deltas = self.cpu_deltas
        memory_deltas = self.memory_deltas
        for w in range(window_count):
            for p in cpu_deltas.get(w, ()):
                grow_expansion(cpu_acc, p)
            for p in memory_deltas.get(w, ()):
                grow_expansion(mem_acc, p)
            values.append((fsum(cpu_acc), fsum(mem_acc)))
        return values


@dataclass(frozen=True)
class DailyResourceSeries:
    """Per-day (cpu, memory) averages of window sums."""

    days: Tuple[Tuple[float, float], ...]
    window_counts: Tuple[int, ...]
    partial_last_day: bool

    def to_dict(self) -> dict:
        return {
            "days": [[c, m] for c, m in self.days],
            "window_counts": list(self.window_counts),
            "partial_last_day": self.partial_last_day,
        }


def daily_averages(
    window_values: Sequence[Tuple[float, float]], windows_per_day: int
) -> DailyResourceSeries:
    """Average the window sums day by day.

    Full days divide by the nominal windows-per-day; a trailing partial
    day averages over the windows it actually has, and is flagged.
    """
    days = []
    counts = []
    total = len(window_values)
    for lo in range(0, total, windows_per_day):
        chunk = window_values[lo : lo + windows_per_day]
        n = len(chunk)
        days.append((fsum(c for c, _ in chunk) / n, fsum(m for _, m in chunk) / n))
        counts.append(n)
    partial = bool(counts) and counts[-1] != windows_per_day
    return DailyResourceSeries(tuple(days), tuple(counts), partial)


@dataclass
class InstanceRequestProfile:
    """Request step function and running interval of one instance."""

    change_times: Tuple[int, ...]
    cpus: Tuple[float, ...]
    memory: Tuple[float, ...]
    run_start: Optional[int]
    run_end: Optional[int]
    malformed: bool

    def value_at(self, t: int) -> Tuple[float, float]:
        # Latest change at or before t; before the first event the first
        # known request is assumed to have been in force all along.
        times = self.change_times
        i = len(times) - 1
        while i > 0 and times[i] > t:
            i -= 1
        return self.cpus[i], self.memory[i]


def build_request_profile(
    rows: List[Tuple[int, int, float, float]], trace_end: int
) -> InstanceRequestProfile:
    """Reduce one instance's sorted (time, code, cpus, memory) rows.

    The running interval is first non-sentinel SCHEDULE to first
    non-sentinel terminal, half-open; an instance still running when the
    trace ends runs through the trace end. A terminal preceding the
    SCHEDULE marks the instance malformed and yields no interval.
    """
    times: List[int] = []
    cpus: List[float] = []
    memory: List[float] = []
    run_start = None
    terminal_time = None
    for time, code, c, m in rows:
        sentinel = is_sentinel(time)
        if not sentinel:
            times.append(time)
            cpus.append(c)
            memory.append(m)
        if code == _SCHEDULE and run_start is None and not sentinel:
            run_start = time
        elif code in _TERMINAL_CODES and terminal_time is None and not sentinel:
            terminal_time = time
    if not times:
        # Only sentinel-timed events: no usable step function.
        first = rows[0]
        times, cpus, memory = [0], [first[2]], [first[3]]
    malformed = False
    run_end = None
    if run_start is not None:
        if terminal_time is None:
            run_end = trace_end
        elif terminal_time < run_start:
            run_start = None
            malformed = True
        else:
            run_end = terminal_time
    elif terminal_time is not None:
        run_start = None
    return InstanceRequestProfile(
        tuple(times), tuple(cpus), tuple(memory), run_start, run_end, malformed
    )


class ResourcesFold:
    """Partition fold over co-partitioned instance events and usage.

    Request attribution needs every event of an instance (and its usage)
    in one place, so the engine partitions both tables by collection id.
    """

    def __init__(self, grid: WindowGrid, include_alloc_instances: bool = False):
        self.grid = grid
        self.include_alloc_instances = include_alloc_instances
        self.request_sums = WindowedSums()
        self.usage_sums = WindowedSums()
        self.unlimited_tasks = 0
        self.malformed_instances = 0
        self.sentinel_usage_records = 0
        self.boundary_spanning_usage = 0
        self.usage_without_instance = 0
        self.exceedance_cpu = 0
        self.exceedance_memory = 0

    def feed_partition(
        self,
        instance_events: Sequence[InstanceEvent],
        usage_records: Sequence[UsageRecord],
    ) -> None:
        grid = self.grid
        rows_by_instance: Dict[Tuple[int, int], List[Tuple[int, int, float, float]]] = {}
        for e in instance_events:
            if not self.include_alloc_instances and e.instance_type != InstanceType.TASK:
                continue
            req = e.resource_request
            rows_by_instance.setdefault((e.collection_id, e.instance_index), []).append(
                (e.time, int(e.event_type), req.cpus, req.memory)
            )

        profiles: Dict[Tuple[int, int], InstanceRequestProfile] = {}
        trace_end = grid.horizon_end
        for key, rows in rows_by_instance.items():
            rows.sort(key=lambda r: (r[0], r[1]))
            profile = build_request_profile(rows, trace_end)
            profiles[key] = profile
            if profile.malformed:
                self.malformed_instances += 1
            if profile.run_start is None:
                continue
            self._attribute_request(profile)

        for u in usage_records:
            if is_sentinel(u.start_time):
                self.sentinel_usage_records += 1
                continue
            w = grid.window_of(u.start_time)
            usage = u.average_usage
            self.usage_sums.add_point(w, usage.cpus, usage.memory)
            if grid.window_of(u.end_time - 1) != w:
                self.boundary_spanning_usage += 1
            profile = profiles.get((u.collection_id, u.instance_index))
            if profile is None:
                self.usage_without_instance += 1
                continue
            req_cpus, req_memory = profile.value_at(grid.window_start(w))
            if req_cpus > 0 and usage.cpus > req_cpus:
                self.exceedance_cpu += 1
            if req_memory > 0 and usage.memory > req_memory:
                self.exceedance_memory += 1

    def _attribute_request(self, profile: InstanceRequestProfile) -> None:
        """Add the in-force request to every window the run overlaps."""
        grid = self.grid
        w_lo = grid.window_of(profile.run_start)
        w_hi = grid.window_of(profile.run_end - 1) + 1
        if w_hi <= w_lo:
            return
        w_hi = min(w_hi, grid.window_count)
        if w_lo >= w_hi:
            return
        # Segment the window range wherever the in-force value can change:
        # a change at time t takes effect for windows starting at or after t.
        cuts = [w_lo]
        for t in profile.change_times:
            w = grid.first_window_at_or_after(t)
            if w_lo < w < w_hi:
                cuts.append(w)
        cuts.append(w_hi)
        cuts = sorted(set(cuts))
        unlimited = False
        for a, b in zip(cuts, cuts[1:]):
            cpus, memory = profile.value_at(grid.window_start(a))
            if cpus == 0.0 or memory == 0.0:
                unlimited = True
            self.request_sums.add_interval(a, b, cpus, memory)
        if unlimited:
            self.unlimited_tasks += 1

    def merge(self, other: "ResourcesFold") -> None:
        self.request_sums.merge(other.request_sums)
        self.usage_sums.merge(other.usage_sums)
        self.unlimited_tasks += other.unlimited_tasks
        self.malformed_instances += other.malformed_instances
        self.sentinel_usage_records += other.sentinel_usage_records
        self.boundary_spanning_usage += other.boundary_spanning_usage
        self.usage_without_instance += other.usage_without_instance
        self.exceedance_cpu += other.exceedance_cpu
        self.exceedance_memory += other.exceedance_memory

    def window_arrays(self) -> Tuple[List[Tuple[float, float]], List[Tuple[float, float]]]:
        W = self.grid.window_count
        return self.request_sums.window_values(W), self.usage_sums.window_values(W)

    def finalize(self) -> dict:
        request_windows, usage_windows = self.window_arrays()
        wpd = self.grid.windows_per_day
        requested = daily_averages(request_windows, wpd)
        consumed = daily_averages(usage_windows, wpd)
        return {
            "requested_per_day": requested.to_dict(),
            "consumed_per_day": consumed.to_dict(),
            "unlimited_tasks": self.unlimited_tasks,
            "exceedance": {
                "cpu_windows": self.exceedance_cpu,
                "memory_windows": self.exceedance_memory,
            },
            "malformed_instances": self.malformed_instances,
            "sentinel_usage_records": self.sentinel_usage_records,
            "boundary_spanning_usage": self.boundary_spanning_usage,
            "usage_without_instance": self.usage_without_instance,
        }


def daily_average_requests(
    instance_events: Iterable[InstanceEvent],
    grid: WindowGrid,
    include_alloc_instances: bool = False,
) -> DailyResourceSeries:
    """Requested resources per day (mean of per-window request sums)."""
    fold = ResourcesFold(grid, include_alloc_instances)
    fold.feed_partition(list(instance_events), [])
    request_windows, _ = fold.window_arrays()
    return daily_averages(request_windows, grid.windows_per_day)


def daily_average_usage(
    usage_records: Iterable[UsageRecord], grid: WindowGrid
) -> DailyResourceSeries:
    """Consumed resources per day (mean of per-window usage sums)."""
    fold = ResourcesFold(grid)
    fold.feed_partition([], list(usage_records))
    _, usage_windows = fold.window_arrays()
    return daily_averages(usage_windows, grid.windows_per_day)
