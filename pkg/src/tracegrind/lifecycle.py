"""Job lifecycle reconstruction and duration statistics.

A job's lifecycle is its time-ordered collection events. Duration is
measured from the first SCHEDULE to the first terminal event (running
time); queue wait is reported separately through per-state durations, and
a config switch measures from SUBMIT instead. Jobs without a terminal
event are censored; a terminal observed before any usable origin is
flagged malformed rather than producing a negative duration.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from .config import DURATION_FROM_SCHEDULE, DURATION_FROM_SUBMIT
from .heterogeneity import CategoricalDistribution, TIER_LABELS
from .model import (
    CollectionEvent,
    CollectionType,
    DURATION_EVENTS,
    EventType,
    PriorityTier,
    TERMINAL_EVENTS,
    TierBoundaries,
    classify_priority_tier,
    is_sentinel,
)

DURATION_STATE_LABELS = tuple(t.name for t in sorted(DURATION_EVENTS))

_TERMINAL_CODES = frozenset(int(t) for t in TERMINAL_EVENTS)
_DURATION_CODES = frozenset(int(t) for t in DURATION_EVENTS)


@dataclass(frozen=True)
class JobLifecycle:
    collection_id: int
    tier: PriorityTier
    events: Tuple[Tuple[int, EventType], ...]
    duration_us: Optional[int]
    final_state: EventType
    censored: bool
    malformed: bool
    # Terminal observed but no measurable origin-to-terminal pair: the job
    # terminated without ever reaching the origin state (e.g. killed while
    # pending) or an endpoint carries a sentinel time.
    unmeasured: bool

    @property
    def duration_seconds(self) -> Optional[float]:
        if self.duration_us is None:
            return None
        return self.duration_us / 1e6


def _origin_code(duration_mode: str) -> int:
    if duration_mode == DURATION_FROM_SCHEDULE:
        return int(EventType.SCHEDULE)
    if duration_mode == DURATION_FROM_SUBMIT:
        return int(EventType.SUBMIT)
    raise ValueError(f"unknown duration mode: {duration_mode}")


def summarize_events(
    ordered: Sequence[Tuple[int, int]], origin_code: int
) -> Tuple[int, Optional[int], bool, bool, bool, List[Tuple[int, int]]]:
    """Reduce one job's sorted (time, code) events.

    Returns (final_code, duration_us, censored, malformed, unmeasured,
    attributions), where attributions lists (state code, elapsed_us) for
    each consecutive pair whose leading event bears a duration. Pairs
    touching a sentinel time are skipped; terminal and LOST events absorb
    no time.
    """
    origin_time = None
    terminal_time = None
    saw_terminal = False
    attributions: List[Tuple[int, int]] = []
    prev_time = prev_code = None
    for time, code in ordered:
        sentinel = is_sentinel(time)
        if code in _TERMINAL_CODES:
            saw_terminal = True
            if terminal_time is None and not sentinel:
                terminal_time = time
        elif code == origin_code and origin_time is None and not sentinel:
            origin_time = time
        if prev_time is not None and prev_code in _DURATION_CODES:
            if not is_sentinel(prev_time) and not sentinel:
                attributions.append((prev_code, time - prev_time))
        prev_time, prev_code = time, code
    final_code = ordered[-1][1]
    censored = not saw_terminal
    malformed = False
    duration_us = None
    unmeasured = False
    if not censored:
        if terminal_time is None or origin_time is None:
            unmeasured = True
        elif terminal_time < origin_time:
            malformed = True
        else:
            duration_us = terminal_time - origin_time
    return final_code, duration_us, censored, malformed, unmeasured, attributions


def build_lifecycles(
    events: Iterable[CollectionEvent],
    boundaries: TierBoundaries,
    duration_mode: str = DURATION_FROM_SCHEDULE,
) -> Dict[int, JobLifecycle]:
    """One lifecycle per job collection; alloc sets are excluded."""
    origin = _origin_code(duration_mode)
    groups: Dict[int, List[CollectionEvent]] = {}
    for e in events:
        groups.setdefault(e.collection_id, []).append(e)
    lifecycles: Dict[int, JobLifecycle] = {}
    for cid, group in groups.items():
        group.sort(key=lambda e: (e.time, int(e.event_type)))
        if group[0].collection_type != CollectionType.JOB:
            continue
        ordered = [(e.time, int(e.event_type)) for e in group]
        final_code, duration_us, censored, malformed, unmeasured, _ = summarize_events(
            ordered, origin
        )
        lifecycles[cid] = JobLifecycle(
            collection_id=cid,
            tier=classify_priority_tier(group[0].priority, boundaries),
            events=tuple((t, EventType(c)) for t, c in ordered),
            duration_us=duration_us,
            final_state=EventType(final_code),
            censored=censored,
            malformed=malformed,
            unmeasured=unmeasured,
        )
    return lifecycles


def band_labels(edges: Sequence[int]) -> Tuple[str, ...]:
    labels = [f"<{edges[0]}s"]
    labels.extend(f"{a}-{b}s" for a, b in zip(edges, edges[1:]))
    labels.append(f">={edges[-1]}s")
    return tuple(labels)


def band_of(duration_us: int, edges: Sequence[int]) -> int:
    # Compare in microseconds so band edges stay exact integers.
    for i, edge in enumerate(edges):
        if duration_us < edge * 1_000_000:
            return i
    return len(edges)


@dataclass(frozen=True)
class DurationHistogram:
    distribution: CategoricalDistribution
    censored: int
    malformed: int
    unmeasured: int

    def to_dict(self) -> dict:
        return {
            "bands": self.distribution.to_dict(),
            "censored": self.censored,
            "malformed": self.malformed,
            "unmeasured": self.unmeasured,
        }


def duration_histogram(
    lifecycles: Iterable[JobLifecycle], edges: Sequence[int]
) -> DurationHistogram:
    """Histogram of job durations; jobs without a duration counted aside."""
    labels = band_labels(edges)
    counts = dict.fromkeys(labels, 0)
    censored = malformed = unmeasured = 0
    for job in lifecycles:
        if job.duration_us is not None:
            counts[labels[band_of(job.duration_us, edges)]] += 1
        elif job.censored:
            censored += 1
        elif job.malformed:
            malformed += 1
        else:
            unmeasured += 1
    return DurationHistogram(
        CategoricalDistribution.from_counts(counts, labels),
        censored,
        malformed,
        unmeasured,
    )


def final_state_rates_by_tier(
    lifecycles: Iterable[JobLifecycle],
) -> Dict[str, CategoricalDistribution]:
    """Per tier, the distribution of last observed event types.

    Censored jobs report their last non-terminal event, so states like
    SCHEDULE can appear alongside the four terminal states.
    """
    per_tier: Dict[str, Dict[str, int]] = {name: {} for name in TIER_LABELS}
    for job in lifecycles:
        counts = per_tier[job.tier.name]
        label = job.final_state.name
        counts[label] = counts.get(label, 0) + 1
    order = [t.name for t in EventType]
    return {
        tier: CategoricalDistribution.from_counts(counts, order)
        for tier, counts in per_tier.items()
    }


class StateStats:
    """Per-state sample count and exact microsecond totals."""

    __slots__ = ("count", "sum_us", "min_us", "max_us")

    def __init__(self) -> None:
        self.count = 0
        self.sum_us = 0
        self.min_us: Optional[int] = None
        self.max_us: Optional[int] = None

    def add(self, delta_us: int) -> None:
        self.count += 1
        self.sum_us += delta_us
        if self.min_us is None or delta_us < self.min_us:
            self.min_us = delta_us
        if self.max_us is None or delta_us > self.max_us:
            self.max_us = delta_us

    def merge(self, other: "StateStats") -> None:
        self.count += other.count
        self.sum_us += other.sum_us
        if other.min_us is not None and (self.min_us is None or other.min_us < self.min_us):
            self.min_us = other.min_us
        if other.max_us is not None and (self.max_us is None or other.max_us > self.max_us):
            self.max_us = other.max_us

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "total_seconds": self.sum_us / 1e6,
            "mean_seconds": self.sum_us / self.count / 1e6 if self.count else None,
            "min_seconds": self.min_us / 1e6 if self.min_us is not None else None,
            "max_seconds": self.max_us / 1e6 if self.max_us is not None else None,
        }


def state_durations(lifecycles: Iterable[JobLifecycle]) -> Dict[str, StateStats]:
    """Time attributed to each duration-bearing state across all jobs."""
    stats = {name: StateStats() for name in DURATION_STATE_LABELS}
    for job in lifecycles:
        prev_time = None
        prev_type = None
        for time, event_type in job.events:
            if (
                prev_time is not None
                and prev_type in DURATION_EVENTS
                and not is_sentinel(prev_time)
                and not is_sentinel(time)
            ):
                stats[prev_type.name].add(time - prev_time)
            prev_time, prev_type = time, event_type
    return stats


def state_stats_to_dict(stats: Dict[str, StateStats]) -> dict:
    return {name: stats[name].to_dict() for name in DURATION_STATE_LABELS}


# --- streaming fold for the engine ---------------------------------------

class LifecycleFold:
    """Partition fold: buffers a partition's events per job, then reduces.

    The engine partitions collection events by collection id, so a job is
    always whole within one partition; only compact statistics survive
    seal() and cross process boundaries.
    """

    def __init__(
        self,
        boundaries: TierBoundaries,
        duration_mode: str,
        band_edges: Sequence[int],
    ):
        self.boundaries = boundaries
        self.origin_code = _origin_code(duration_mode)
        self.band_edges = tuple(band_edges)
        self._labels = band_labels(band_edges)
        self._pending: Dict[int, list] = {}
        self.band_counts = dict.fromkeys(self._labels, 0)
        self.censored = 0
        self.malformed = 0
        self.unmeasured = 0
        self.total_jobs = 0
        self.final_by_tier: Dict[str, Dict[str, int]] = {n: {} for n in TIER_LABELS}
        self.state_stats = {name: StateStats() for name in DURATION_STATE_LABELS}

    def feed_collection_events(self, events: Sequence[CollectionEvent]) -> None:
        pending = self._pending
        for e in events:
            pending.setdefault(e.collection_id, []).append(
                (e.time, int(e.event_type), e.priority, int(e.collection_type))
            )

    def seal(self) -> None:
        """Reduce buffered jobs to statistics and drop the raw events."""
        edges = self.band_edges
        labels = self._labels
        for rows in self._pending.values():
            rows.sort(key=lambda r: (r[0], r[1]))
            if rows[0][3] != int(CollectionType.JOB):
                continue
            ordered = [(r[0], r[1]) for r in rows]
            final_code, duration_us, censored, malformed, unmeasured, attrs = (
                summarize_events(ordered, self.origin_code)
            )
            self.total_jobs += 1
            tier = classify_priority_tier(rows[0][2], self.boundaries).name
            label = EventType(final_code).name
            tier_counts = self.final_by_tier[tier]
            tier_counts[label] = tier_counts.get(label, 0) + 1
            if duration_us is not None:
                self.band_counts[labels[band_of(duration_us, edges)]] += 1
            elif censored:
                self.censored += 1
            elif malformed:
                self.malformed += 1
            else:
                self.unmeasured += 1
            for code, delta in attrs:
                self.state_stats[EventType(code).name].add(delta)
        self._pending = {}

    def merge(self, other: "LifecycleFold") -> None:
        for label, n in other.band_counts.items():
            self.band_counts[label] += n
        self.censored += other.censored
        self.malformed += other.malformed
        self.unmeasured += other.unmeasured
        self.total_jobs += other.total_jobs
        for tier, counts in other.final_by_tier.items():
            mine = self.final_by_tier[tier]
            for label, n in counts.items():
                mine[label] = mine.get(label, 0) + n
        for name, stats in other.state_stats.items():
            self.state_stats[name].merge(stats)

    def finalize(self) -> dict:
        order = [t.name for t in EventType]
        final_states = {}
        for tier in TIER_LABELS:
            dist = CategoricalDistribution.from_counts(self.final_by_tier[tier], order)
            final_states[tier] = {
                "counts": {l: c for l, c in dist.pairs},
                "fractions": {l: f for l, f in dist.fractions()},
                "total": dist.total,
            }
        histogram = DurationHistogram(
            CategoricalDistribution.from_counts(self.band_counts, self._labels),
            self.censored,
            self.malformed,
            self.unmeasured,
        )
        return {
            "total_jobs": self.total_jobs,
            "duration_histogram": histogram.to_dict(),
            "final_states_by_tier": final_states,
            "state_durations": state_stats_to_dict(self.state_stats),
        }
