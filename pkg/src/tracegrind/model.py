"""Core data model for cluster scheduler traces.

Events, priority tiers, resource vectors, and the classification helpers
shared by every analysis. All types are immutable and safe to hand to
concurrent workers. Integer enum codes are the on-disk representation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

# Timestamps are microseconds. 0 means "before the trace started" and the
# largest 64-bit value means "after the trace ended"; both participate in
# counts but never in duration or day/window arithmetic.
SENTINEL_BEFORE = 0
SENTINEL_AFTER = 2**63 - 1

MICROS_PER_SECOND = 1_000_000
MICROS_PER_DAY = 86_400 * MICROS_PER_SECOND


def is_sentinel(time_us: int) -> bool:
    return time_us == SENTINEL_BEFORE or time_us == SENTINEL_AFTER


def day_count_for_horizon(horizon_us: int) -> int:
    """Days needed so the last trace timestamp falls inside a day.

    floor+1 rather than ceil: the two agree unless the horizon is an exact
    multiple of a day, where the final instant still needs a (then mostly
    empty) trailing day of its own.
    """
    if horizon_us < 0:
        raise ValueError("horizon must be non-negative")
    return horizon_us // MICROS_PER_DAY + 1


def day_of(time_us: int, trace_start: int) -> int:
    """Day index of a non-sentinel timestamp, counted from trace start."""
    return (time_us - trace_start) // MICROS_PER_DAY


class EventType(IntEnum):
    SUBMIT = 0
    QUEUE = 1
    ENABLE = 2
    SCHEDULE = 3
    EVICT = 4
    FAIL = 5
    FINISH = 6
    KILL = 7
    LOST = 8
    UPDATE_PENDING = 9
    UPDATE_RUNNING = 10


# EVICT/FAIL/FINISH/KILL end a lifecycle; the six others below carry time
# spent in a state. LOST is a data-quality marker and is neither.
TERMINAL_EVENTS = frozenset(
    {EventType.EVICT, EventType.FAIL, EventType.FINISH, EventType.KILL}
)
DURATION_EVENTS = frozenset(
    {
        EventType.SUBMIT,
        EventType.QUEUE,
        EventType.ENABLE,
        EventType.SCHEDULE,
        EventType.UPDATE_PENDING,
        EventType.UPDATE_RUNNING,
    }
)


def is_terminal(event_type: EventType) -> bool:
    """True iff the event ends an entity's lifecycle."""
    return event_type in TERMINAL_EVENTS


class PriorityTier(IntEnum):
    # Declaration order is the tier order: classification is monotone in
    # the raw priority value.
    FREE = 0
    BEST_EFFORT_BATCH = 1
    MID = 2
    PRODUCTION = 3
    MONITORING = 4


class CollectionType(IntEnum):
    JOB = 0
    ALLOC_SET = 1


class InstanceType(IntEnum):
    TASK = 0
    ALLOC_INSTANCE = 1


class MachineEventType(IntEnum):
    ADD = 0
    REMOVE = 1
    UPDATE = 2


class VerticalScaling(IntEnum):
    SETTING_UNKNOWN = 0
    OFF = 1
    USER_CONSTRAINED = 2
    FULLY_AUTOMATED = 3


@dataclass(frozen=True, slots=True)
class Resources:
    """Normalized CPU and memory pair; both components non-negative."""

    cpus: float
    memory: float

    def __add__(self, other: "Resources") -> "Resources":
        return Resources(self.cpus + other.cpus, self.memory + other.memory)

    def scaled(self, factor: float) -> "Resources":
        return Resources(self.cpus * factor, self.memory * factor)


ZERO_RESOURCES = Resources(0.0, 0.0)


@dataclass(frozen=True, slots=True)
class TierBoundaries:
    """Ascending cut points splitting the priority axis into five tiers.

    A priority p maps to FREE when p <= free_max, to BEST_EFFORT_BATCH when
    p <= best_effort_max, and so on; anything above production_max is
    MONITORING. Defaults follow the published trace-format conventions and
    are configurable because traces may drift.
    """

    free_max: int = 99
    best_effort_max: int = 115
    mid_max: int = 119
    production_max: int = 359

    def __post_init__(self) -> None:
        cuts = (self.free_max, self.best_effort_max, self.mid_max, self.production_max)
        if list(cuts) != sorted(set(cuts)):
            raise ValueError(f"tier boundaries must be strictly ascending: {cuts}")


DEFAULT_TIER_BOUNDARIES = TierBoundaries()


def classify_priority_tier(
    priority: int, boundaries: TierBoundaries = DEFAULT_TIER_BOUNDARIES
) -> PriorityTier:
    """Map an integer priority to its tier. Total over all integers."""
    if priority <= boundaries.free_max:
        return PriorityTier.FREE
    if priority <= boundaries.best_effort_max:
        return PriorityTier.BEST_EFFORT_BATCH
    if priority <= boundaries.mid_max:
        return PriorityTier.MID
    if priority <= boundaries.production_max:
        return PriorityTier.PRODUCTION
    return PriorityTier.MONITORING


# Job-size bins in tasks per job. Edges chosen so the six labels partition
# the positive integers.
JOB_SIZE_BINS = ("1", "2-10", "11-100", "101-1000", "1001-2000", ">2000")
_JOB_SIZE_EDGES = (1, 10, 100, 1000, 2000)


def job_size_bin(task_count: int) -> str:
    """Bin label for a job with ``task_count`` tasks (must be >= 1)."""
    if task_count < 1:
        raise ValueError(f"a job has at least one task, got {task_count}")
    for edge, label in zip(_JOB_SIZE_EDGES, JOB_SIZE_BINS):
        if task_count <= edge:
            return label
    return JOB_SIZE_BINS[-1]


@dataclass(frozen=True, slots=True)
class CollectionEvent:
    time: int
    collection_id: int
    event_type: EventType
    collection_type: CollectionType
    priority: int
    alloc_collection_id: Optional[int] = None
    parent_collection_id: Optional[int] = None
    max_per_machine: Optional[int] = None
    max_per_switch: Optional[int] = None
    vertical_scaling: VerticalScaling = VerticalScaling.SETTING_UNKNOWN


@dataclass(frozen=True, slots=True)
class InstanceEvent:
    time: int
    collection_id: int
    instance_index: int
    event_type: EventType
    instance_type: InstanceType
    priority: int
    resource_request: Resources
    machine_id: Optional[int] = None
    alloc_collection_id: Optional[int] = None


@dataclass(frozen=True, slots=True)
class UsageRecord:
    """Average resource consumption of one instance over <= 300 s."""

    start_time: int
    end_time: int
    collection_id: int
    instance_index: int
    machine_id: int
    average_usage: Resources


@dataclass(frozen=True, slots=True)
class MachineEvent:
    time: int
    machine_id: int
    event_type: MachineEventType
    capacity: Resources
