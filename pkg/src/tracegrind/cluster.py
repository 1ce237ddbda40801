"""Cluster availability and utilization.

Machine timelines come from the machine-events table: a machine is
present from its ADD until its REMOVE (or the trace end), and its
capacity is a step function updated by the events. A machine whose first
observed event is not an ADD was part of the cell before tracing began
and counts as present from the trace start.

Capacity enters a window when the machine is present at the window start,
valued by the capacity then in force; this mirrors the request-side
windowing so usage, requests, and capacity are comparable per window.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import fsum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .model import (
    MachineEvent,
    MachineEventType,
    MICROS_PER_DAY,
    is_sentinel,
)
from .resources import DailyResourceSeries, WindowGrid, WindowedSums, daily_averages

_ADD = int(MachineEventType.ADD)
_REMOVE = int(MachineEventType.REMOVE)

CDF_METRICS = ("cpu", "memory", "combined")


@dataclass(frozen=True)
class MachineTimeline:
    """Presence intervals and capacity step function of one machine."""

    machine_id: int
    presence: Tuple[Tuple[int, int], ...]
    change_times: Tuple[int, ...]
    cpus: Tuple[float, ...]
    memory: Tuple[float, ...]
    remove_without_add: int
    assumed_preexisting: bool

    def capacity_at(self, t: int) -> Tuple[float, float]:
        times = self.change_times
        i = len(times) - 1
        while i > 0 and times[i] > t:
            i -= 1
        return self.cpus[i], self.memory[i]

    def present_at(self, t: int) -> bool:
        return any(a <= t < b for a, b in self.presence)


def build_machine_timeline(
    machine_id: int,
    rows: List[Tuple[int, int, float, float]],
    trace_start: int,
    trace_end: int,
) -> MachineTimeline:
    """Reduce one machine's sorted (time, code, cpus, memory) rows."""
    rows = [r for r in rows if not is_sentinel(r[0])]
    if not rows:
        return MachineTimeline(machine_id, (), (0,), (0.0,), (0.0,), 0, False)
    presence: List[Tuple[int, int]] = []
    open_since: Optional[int] = None
    remove_without_add = 0
    assumed_preexisting = False
    saw_add = False
    if rows[0][1] not in (_ADD, _REMOVE):
        # First sign of life is an UPDATE: the machine predates the trace.
        open_since = trace_start
        assumed_preexisting = True
    for time, code, _, _ in rows:
        if code == _ADD:
            saw_add = True
            if open_since is None:
                open_since = time
        elif code == _REMOVE:
            if open_since is not None:
                if time > open_since:
                    presence.append((open_since, time))
                open_since = None
            else:
                remove_without_add += 1
                if not presence and not saw_add:
                    assumed_preexisting = True
                    if time > trace_start:
                        presence.append((trace_start, time))
    if open_since is not None and trace_end > open_since:
        presence.append((open_since, trace_end))
    return MachineTimeline(
        machine_id,
        tuple(presence),
        tuple(r[0] for r in rows),
        tuple(r[2] for r in rows),
        tuple(r[3] for r in rows),
        remove_without_add,
        assumed_preexisting,
    )


def _group_machine_rows(
    events: Iterable[MachineEvent],
) -> Dict[int, List[Tuple[int, int, float, float]]]:
    groups: Dict[int, List[Tuple[int, int, float, float]]] = {}
    for e in events:
        groups.setdefault(e.machine_id, []).append(
            (e.time, int(e.event_type), e.capacity.cpus, e.capacity.memory)
        )
    for rows in groups.values():
        rows.sort(key=lambda r: (r[0], r[1]))
    return groups


def machines_per_day(
    events: Iterable[MachineEvent], trace_start: int, trace_end: int, day_count: int
) -> List[int]:
    """Machines whose presence overlaps any part of each day."""
    counts = [0] * day_count
    for machine_id, rows in _group_machine_rows(events).items():
        timeline = build_machine_timeline(machine_id, rows, trace_start, trace_end)
        _count_presence_days(timeline, trace_start, day_count, counts)
    return counts


def _count_presence_days(
    timeline: MachineTimeline, trace_start: int, day_count: int, counts: List[int]
) -> None:
    seen_days = set()
    for a, b in timeline.presence:
        first = max(0, (a - trace_start) // MICROS_PER_DAY)
        last = min(day_count - 1, (b - 1 - trace_start) // MICROS_PER_DAY)
        seen_days.update(range(first, last + 1))
    for d in seen_days:
        counts[d] += 1


def _add_capacity_windows(
    timeline: MachineTimeline, grid: WindowGrid, sums: WindowedSums
) -> None:
    W = grid.window_count
    for a, b in timeline.presence:
        w_lo = max(0, grid.first_window_at_or_after(a))
        w_hi = min(W, grid.first_window_at_or_after(b))
        if w_hi <= w_lo:
            continue
        cuts = [w_lo]
        for t in timeline.change_times:
            w = grid.first_window_at_or_after(t)
            if w_lo < w < w_hi:
                cuts.append(w)
        cuts.append(w_hi)
        cuts = sorted(set(cuts))
        for lo, hi in zip(cuts, cuts[1:]):
            cpus, memory = timeline.capacity_at(grid.window_start(lo))
            sums.add_interval(lo, hi, cpus, memory)


def capacity_per_day(
    events: Iterable[MachineEvent], grid: WindowGrid
) -> DailyResourceSeries:
    """Window-averaged capacity in force, day by day."""
    sums = WindowedSums()
    trace_start = grid.origin
    trace_end = grid.horizon_end
    for machine_id, rows in _group_machine_rows(events).items():
        timeline = build_machine_timeline(machine_id, rows, trace_start, trace_end)
        _add_capacity_windows(timeline, grid, sums)
    return daily_averages(sums.window_values(grid.window_count), grid.windows_per_day)


def usage_vs_capacity(
    usage: DailyResourceSeries, capacity: DailyResourceSeries
) -> List[Tuple[Optional[float], Optional[float]]]:
    """Component-wise daily utilization; zero capacity yields None."""
    if len(usage.days) != len(capacity.days):
        raise ValueError("usage and capacity series cover different day counts")
    out: List[Tuple[Optional[float], Optional[float]]] = []
    for (uc, um), (cc, cm) in zip(usage.days, capacity.days):
        out.append(
            (uc / cc if cc != 0 else None, um / cm if cm != 0 else None)
        )
    return out


@dataclass(frozen=True)
class UtilizationCDF:
    """Empirical distribution of per-window utilization fractions."""

    points: Tuple[Tuple[float, float], ...]
    included_windows: int
    excluded_windows: int

    def __post_init__(self) -> None:
        probs = [p for _, p in self.points]
        if probs and (probs != sorted(probs) or abs(probs[-1] - 1.0) > 1e-12):
            raise ValueError("CDF probabilities must be non-decreasing and end at 1")

    def to_dict(self) -> dict:
        return {
            "points": [[x, p] for x, p in self.points],
            "included_windows": self.included_windows,
            "excluded_windows": self.excluded_windows,
        }


def utilization_cdf(
    usage_windows: Sequence[Tuple[float, float]],
    capacity_windows: Sequence[Tuple[float, float]],
    metric: str,
) -> UtilizationCDF:
    """CDF of windowed utilization for cpu, memory, or their maximum.

    Windows whose required capacity component is zero carry no defined
    utilization; they are excluded and counted.
    """
    if metric not in CDF_METRICS:
        raise ValueError(f"unknown CDF metric: {metric}")
    if len(usage_windows) != len(capacity_windows):
        raise ValueError("usage and capacity window counts differ")
    values: List[float] = []
    excluded = 0
    for (uc, um), (cc, cm) in zip(usage_windows, capacity_windows):
        if metric == "cpu":
            if cc == 0:
                excluded += 1
                continue
            values.append(uc / cc)
        elif metric == "memory":
            if cm == 0:
                excluded += 1
                continue
            values.append(um / cm)
        else:
            if cc == 0 or cm == 0:
                excluded += 1
                continue
            values.append(max(uc / cc, um / cm))
    return cdf_from_values(values, excluded)


def cdf_from_values(values: Sequence[float], excluded: int = 0) -> UtilizationCDF:
    """Distinct sorted values with cumulative probability."""
    n = len(values)
    if n == 0:
        return UtilizationCDF((), 0, excluded)
    points: List[Tuple[float, float]] = []
    seen = 0
    last = None
    for x in sorted(values):
        if last is not None and x != last:
            points.append((last, seen / n))
        seen += 1
        last = x
    points.append((last, 1.0))
    return UtilizationCDF(tuple(points), n, excluded)


# --- streaming fold for the engine ---------------------------------------

class ClusterFold:
    """Partition fold over machine events (partitioned by machine id)."""

    def __init__(self, grid: WindowGrid, day_count: int):
        self.grid = grid
        self.day_count = day_count
        self._pending: Dict[int, List[Tuple[int, int, float, float]]] = {}
        self.machines_per_day = [0] * day_count
        self.capacity_sums = WindowedSums()
        self.machine_count = 0
        self.remove_without_add = 0
        self.assumed_preexisting = 0

    def feed_machine_events(self, events: Sequence[MachineEvent]) -> None:
        pending = self._pending
        for e in events:
            pending.setdefault(e.machine_id, []).append(
                (e.time, int(e.event_type), e.capacity.cpus, e.capacity.memory)
            )

    def seal(self) -> None:
        trace_start = self.grid.origin
        trace_end = self.grid.horizon_end
        for machine_id, rows in self._pending.items():
            rows.sort(key=lambda r: (r[0], r[1]))
            timeline = build_machine_timeline(machine_id, rows, trace_start, trace_end)
            self.machine_count += 1
            self.remove_without_add += timeline.remove_without_add
            self.assumed_preexisting += 1 if timeline.assumed_preexisting else 0
            _count_presence_days(timeline, trace_start, self.day_count, self.machines_per_day)
            _add_capacity_windows(timeline, self.grid, self.capacity_sums)
        self._pending = {}

    def merge(self, other: "ClusterFold") -> None:
        for d, n in enumerate(other.machines_per_day):
            self.machines_per_day[d] += n
        self.capacity_sums.merge(other.capacity_sums)
        self.machine_count += other.machine_count
        self.remove_without_add += other.remove_without_add
        self.assumed_preexisting += other.assumed_preexisting

    def capacity_windows(self) -> List[Tuple[float, float]]:
        return self.capacity_sums.window_values(self.grid.window_count)

    def finalize(self, usage_windows: Sequence[Tuple[float, float]]) -> dict:
        capacity_windows = self.capacity_windows()
        capacity_daily = daily_averages(capacity_windows, self.grid.windows_per_day)
        usage_daily = daily_averages(usage_windows, self.grid.windows_per_day)
        utilization = usage_vs_capacity(usage_daily, capacity_daily)
        cdfs = {
            metric: utilization_cdf(usage_windows, capacity_windows, metric).to_dict()
            for metric in CDF_METRICS
        }
        return {
            "machine_count": self.machine_count,
            "machines_per_day": list(self.machines_per_day),
            "capacity_per_day": capacity_daily.to_dict(),
            "utilization_per_day": [[c, m] for c, m in utilization],
            "utilization_cdf": cdfs,
            "remove_without_add": self.remove_without_add,
            "assumed_preexisting": self.assumed_preexisting,
        }
