"""Property-by-property heterogeneity characterization.

Event-type counts for the collection and instance tables, per-day event
and tier activity, per-collection field distributions (alloc hosting,
parent presence, placement constraints, vertical scaling), job sizes, and
the scheduled-instance fraction.

Every statistic exists in two forms: a plain function over a full record
sequence, and a streaming fold (`HeterogeneityFold`) whose partial results
merge associatively so the engine can run it per partition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple

from .model import (
    CollectionEvent,
    CollectionType,
    EventType,
    InstanceEvent,
    InstanceType,
    MICROS_PER_DAY,
    PriorityTier,
    TierBoundaries,
    VerticalScaling,
    classify_priority_tier,
    day_of,
    is_sentinel,
    job_size_bin,
    JOB_SIZE_BINS,
)

# Per-day series in the report track these four event types; ENABLE is
# omitted because it shadows SCHEDULE at this granularity.
DAILY_EVENT_LABELS = ("SUBMIT", "SCHEDULE", "FINISH", "KILL")
_DAILY_EVENT_TYPES = {
    EventType.SUBMIT: "SUBMIT",
    EventType.SCHEDULE: "SCHEDULE",
    EventType.FINISH: "FINISH",
    EventType.KILL: "KILL",
}

TIER_LABELS = tuple(t.name for t in PriorityTier)


@dataclass(frozen=True)
class CategoricalDistribution:
    """Ordered (label, count) pairs with their total."""

    pairs: Tuple[Tuple[str, int], ...]
    total: int

    def __post_init__(self) -> None:
        if sum(c for _, c in self.pairs) != self.total:
            raise ValueError("counts do not sum to total")
        labels = [l for l, _ in self.pairs]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate labels")

    @classmethod
    def from_counts(
        cls, counts: Dict[str, int], order: Optional[Sequence[str]] = None
    ) -> "CategoricalDistribution":
        if order is None:
            order = sorted(counts)
        pairs = tuple((label, counts[label]) for label in order if label in counts)
        return cls(pairs, sum(counts.values()))

    def count(self, label: str) -> int:
        for l, c in self.pairs:
            if l == label:
                return c
        return 0

    def fractions(self) -> Tuple[Tuple[str, float], ...]:
        if self.total == 0:
            return tuple((l, 0.0) for l, _ in self.pairs)
        return tuple((l, c / self.total) for l, c in self.pairs)

    def to_dict(self) -> dict:
        return {"counts": {l: c for l, c in self.pairs}, "total": self.total}


@dataclass(frozen=True)
class DailySeries:
    """Per-day counts for a fixed label set, plus sentinel exclusions."""

    labels: Tuple[str, ...]
    days: Tuple[dict, ...]
    exclusions: int

    @property
    def day_count(self) -> int:
        return len(self.days)

    def label_total(self, label: str) -> int:
        return sum(day.get(label, 0) for day in self.days)

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "days": [dict(day) for day in self.days],
            "exclusions": self.exclusions,
        }


def count_event_types(events: Iterable) -> CategoricalDistribution:
    """Distribution of event types over one table, in code order."""
    counts: Dict[str, int] = {}
    for e in events:
        label = e.event_type.name
        counts[label] = counts.get(label, 0) + 1
    order = [t.name for t in EventType]
    return CategoricalDistribution.from_counts(counts, order)


def events_per_day(
    events: Iterable,
    label_fn: Callable[[object], Optional[str]],
    labels: Sequence[str],
    trace_start: int,
    day_count: int,
) -> DailySeries:
    """Per-day counts of events selected by ``label_fn``.

    Events mapped to None are ignored entirely; selected events with a
    sentinel time cannot be placed on a day and are tallied as exclusions.
    """
    days = [dict.fromkeys(labels, 0) for _ in range(day_count)]
    exclusions = 0
    for e in events:
        label = label_fn(e)
        if label is None:
            continue
        if is_sentinel(e.time):
            exclusions += 1
            continue
        days[day_of(e.time, trace_start)][label] += 1
    return DailySeries(tuple(labels), tuple(days), exclusions)


def daily_event_label(event) -> Optional[str]:
    return _DAILY_EVENT_TYPES.get(event.event_type)


def tier_activity_per_day(
    events: Iterable,
    boundaries: TierBoundaries,
    trace_start: int,
    day_count: int,
) -> DailySeries:
    """Per-day event counts for each of the five priority tiers."""
    return events_per_day(
        events,
        lambda e: classify_priority_tier(e.priority, boundaries).name,
        TIER_LABELS,
        trace_start,
        day_count,
    )


# Field axes for per-collection distributions, with the population each is
# measured over: hosting and vertical scaling are per-job submission
# options, the rest apply to every collection.
ALLOC_HOSTING = "alloc_hosting"
PARENT_PRESENCE = "parent_presence"
MAX_PER_MACHINE = "max_per_machine"
MAX_PER_SWITCH = "max_per_switch"
VERTICAL_SCALING = "vertical_scaling"
JOBS_ONLY_FIELDS = frozenset({ALLOC_HOSTING, VERTICAL_SCALING})

UNSET_LABEL = "unset"


def first_events_per_collection(
    events: Iterable[CollectionEvent],
) -> Dict[int, CollectionEvent]:
    """One representative event per collection: first by (time, code)."""
    firsts: Dict[int, CollectionEvent] = {}
    for e in events:
        cur = firsts.get(e.collection_id)
        if cur is None or (e.time, int(e.event_type)) < (cur.time, int(cur.event_type)):
            firsts[e.collection_id] = e
    return firsts


def _optional_value_counts(values: Iterable[Optional[int]]) -> CategoricalDistribution:
    counts: Dict[str, int] = {}
    numeric = set()
    for v in values:
        if v is None:
            label = UNSET_LABEL
        else:
            label = str(v)
            numeric.add(v)
        counts[label] = counts.get(label, 0) + 1
    order = [UNSET_LABEL] + [str(v) for v in sorted(numeric)]
    return CategoricalDistribution.from_counts(counts, order)


def field_distribution(
    first_events: Dict[int, CollectionEvent], field_name: str
) -> CategoricalDistribution:
    """Distribution of one collection field over deduplicated collections.

    ``first_events`` must hold one representative event per collection_id
    (see first_events_per_collection). Jobs-only fields skip alloc sets.
    """
    rows = first_events.values()
    if field_name in JOBS_ONLY_FIELDS:
        rows = [e for e in rows if e.collection_type == CollectionType.JOB]
    if field_name == ALLOC_HOSTING:
        counts = {"top_level": 0, "hosted": 0}
        for e in rows:
            counts["hosted" if e.alloc_collection_id is not None else "top_level"] += 1
        return CategoricalDistribution.from_counts(counts, ("top_level", "hosted"))
    if field_name == PARENT_PRESENCE:
        counts = {"with_parent": 0, "without_parent": 0}
        for e in rows:
            key = "with_parent" if e.parent_collection_id is not None else "without_parent"
            counts[key] += 1
        return CategoricalDistribution.from_counts(counts, ("with_parent", "without_parent"))
    if field_name == MAX_PER_MACHINE:
        return _optional_value_counts(e.max_per_machine for e in rows)
    if field_name == MAX_PER_SWITCH:
        return _optional_value_counts(e.max_per_switch for e in rows)
    if field_name == VERTICAL_SCALING:
        counts = dict.fromkeys((v.name for v in VerticalScaling), 0)
        for e in rows:
            counts[e.vertical_scaling.name] += 1
        return CategoricalDistribution.from_counts(
            counts, [v.name for v in VerticalScaling]
        )
    raise ValueError(f"unknown field: {field_name}")


def tier_distribution(
    first_events: Dict[int, CollectionEvent], boundaries: TierBoundaries
) -> CategoricalDistribution:
    """Jobs per priority tier, one row per job collection."""
    counts = dict.fromkeys(TIER_LABELS, 0)
    for e in first_events.values():
        if e.collection_type == CollectionType.JOB:
            counts[classify_priority_tier(e.priority, boundaries).name] += 1
    return CategoricalDistribution.from_counts(counts, TIER_LABELS)


def job_size_distribution(instance_events: Iterable[InstanceEvent]) -> CategoricalDistribution:
    """Tasks-per-job distribution over the six size bins.

    A job's size is max task instance_index + 1, which tolerates repeated
    events for the same instance.
    """
    max_index: Dict[int, int] = {}
    for e in instance_events:
        if e.instance_type != InstanceType.TASK:
            continue
        cur = max_index.get(e.collection_id, -1)
        if e.instance_index > cur:
            max_index[e.collection_id] = e.instance_index
    counts = dict.fromkeys(JOB_SIZE_BINS, 0)
    for top in max_index.values():
        counts[job_size_bin(top + 1)] += 1
    return CategoricalDistribution.from_counts(counts, JOB_SIZE_BINS)


@dataclass(frozen=True)
class ScheduledFraction:
    fraction: float
    instances: int
    scheduled: int
    empty: bool

    def to_dict(self) -> dict:
        return {
            "fraction": self.fraction,
            "instances": self.instances,
            "scheduled": self.scheduled,
            "empty": self.empty,
        }


def scheduled_fraction(instance_events: Iterable[InstanceEvent]) -> ScheduledFraction:
    """Fraction of distinct instances ever placed on a machine."""
    seen: Dict[Tuple[int, int], bool] = {}
    for e in instance_events:
        key = (e.collection_id, e.instance_index)
        seen[key] = seen.get(key, False) or e.machine_id is not None
    if not seen:
        return ScheduledFraction(0.0, 0, 0, True)
    placed = sum(1 for v in seen.values() if v)
    return ScheduledFraction(placed / len(seen), len(seen), placed, False)


# --- streaming fold for the engine ---------------------------------------

class HeterogeneityFold:
    """Partition-level accumulator; merge() is associative and key-safe."""

    def __init__(self, boundaries: TierBoundaries, trace_start: int, day_count: int):
        self.boundaries = boundaries
        self.trace_start = trace_start
        self.day_count = day_count
        self.collection_type_counts: Dict[int, int] = {}
        self.instance_type_counts: Dict[int, int] = {}
        self.daily_events = [dict.fromkeys(DAILY_EVENT_LABELS, 0) for _ in range(day_count)]
        self.daily_events_excluded = 0
        self.daily_tiers = [dict.fromkeys(TIER_LABELS, 0) for _ in range(day_count)]
        self.daily_tiers_excluded = 0
        self.firsts: Dict[int, CollectionEvent] = {}
        self.task_max_index: Dict[int, int] = {}
        self.instance_scheduled: Dict[Tuple[int, int], bool] = {}

    def feed_collection_events(self, events: Sequence[CollectionEvent]) -> None:
        firsts = self.firsts
        type_counts = self.collection_type_counts
        boundaries = self.boundaries
        start = self.trace_start
        for e in events:
            code = int(e.event_type)
            type_counts[code] = type_counts.get(code, 0) + 1
            label = _DAILY_EVENT_TYPES.get(e.event_type)
            sentinel = is_sentinel(e.time)
            if label is not None:
                if sentinel:
                    self.daily_events_excluded += 1
                else:
                    self.daily_events[(e.time - start) // MICROS_PER_DAY][label] += 1
            if sentinel:
                self.daily_tiers_excluded += 1
            else:
                tier = classify_priority_tier(e.priority, boundaries).name
                self.daily_tiers[(e.time - start) // MICROS_PER_DAY][tier] += 1
            cur = firsts.get(e.collection_id)
            if cur is None or (e.time, code) < (cur.time, int(cur.event_type)):
                firsts[e.collection_id] = e

    def feed_instance_events(self, events: Sequence[InstanceEvent]) -> None:
        type_counts = self.instance_type_counts
        task_max = self.task_max_index
        scheduled = self.instance_scheduled
        for e in events:
            code = int(e.event_type)
            type_counts[code] = type_counts.get(code, 0) + 1
            if e.instance_type == InstanceType.TASK:
                cur = task_max.get(e.collection_id, -1)
                if e.instance_index > cur:
                    task_max[e.collection_id] = e.instance_index
            key = (e.collection_id, e.instance_index)
            scheduled[key] = scheduled.get(key, False) or e.machine_id is not None

    def merge(self, other: "HeterogeneityFold") -> None:
        for code, n in other.collection_type_counts.items():
            self.collection_type_counts[code] = self.collection_type_counts.get(code, 0) + n
        for code, n in other.instance_type_counts.items():
            self.instance_type_counts[code] = self.instance_type_counts.get(code, 0) + n
        for mine, theirs in zip(self.daily_events, other.daily_events):
            for label, n in theirs.items():
                mine[label] += n
        self.daily_events_excluded += other.daily_events_excluded
        for mine, theirs in zip(self.daily_tiers, other.daily_tiers):
            for label, n in theirs.items():
                mine[label] += n
        self.daily_tiers_excluded += other.daily_tiers_excluded
        for cid, e in other.firsts.items():
            cur = self.firsts.get(cid)
            if cur is None or (e.time, int(e.event_type)) < (cur.time, int(cur.event_type)):
                self.firsts[cid] = e
        for cid, top in other.task_max_index.items():
            if top > self.task_max_index.get(cid, -1):
                self.task_max_index[cid] = top
        for key, placed in other.instance_scheduled.items():
            self.instance_scheduled[key] = self.instance_scheduled.get(key, False) or placed

    def finalize(self) -> dict:
        order = [t.name for t in EventType]
        collection_types = CategoricalDistribution.from_counts(
            {EventType(c).name: n for c, n in self.collection_type_counts.items()}, order
        )
        instance_types = CategoricalDistribution.from_counts(
            {EventType(c).name: n for c, n in self.instance_type_counts.items()}, order
        )
        events_daily = DailySeries(
            DAILY_EVENT_LABELS, tuple(self.daily_events), self.daily_events_excluded
        )
        tiers_daily = DailySeries(
            TIER_LABELS, tuple(self.daily_tiers), self.daily_tiers_excluded
        )
        size_counts = dict.fromkeys(JOB_SIZE_BINS, 0)
        for top in self.task_max_index.values():
            size_counts[job_size_bin(top + 1)] += 1
        if self.instance_scheduled:
            placed = sum(1 for v in self.instance_scheduled.values() if v)
            sched = ScheduledFraction(
                placed / len(self.instance_scheduled),
                len(self.instance_scheduled),
                placed,
                False,
            )
        else:
            sched = ScheduledFraction(0.0, 0, 0, True)
        return {
            "collection_event_types": collection_types.to_dict(),
            "instance_event_types": instance_types.to_dict(),
            "events_per_day": events_daily.to_dict(),
            "tiers_per_day": tiers_daily.to_dict(),
            "tier_distribution": tier_distribution(self.firsts, self.boundaries).to_dict(),
            "alloc_hosting": field_distribution(self.firsts, ALLOC_HOSTING).to_dict(),
            "parent_presence": field_distribution(self.firsts, PARENT_PRESENCE).to_dict(),
            "max_per_machine": field_distribution(self.firsts, MAX_PER_MACHINE).to_dict(),
            "max_per_switch": field_distribution(self.firsts, MAX_PER_SWITCH).to_dict(),
            "vertical_scaling": field_distribution(self.firsts, VERTICAL_SCALING).to_dict(),
            "job_sizes": job_size_distribution_counts(size_counts),
            "scheduled_fraction": sched.to_dict(),
        }


def job_size_distribution_counts(size_counts: Dict[str, int]) -> dict:
    return CategoricalDistribution.from_counts(size_counts, JOB_SIZE_BINS).to_dict()
