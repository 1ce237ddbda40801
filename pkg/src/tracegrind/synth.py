"""Deterministic synthetic trace generation with exact ground truth.

Every job gets a well-formed event chain (SUBMIT, optional QUEUE, ENABLE,
SCHEDULE, then a terminal event or a censoring cut), tasks tile their
running intervals with usage records on the 5-minute grid, and machines
anchor the trace start. Ground truth is recomputed from the realized
records by the brute-force oracle, never from the spec's distributions,
so pipeline comparisons are exact rather than statistical.

Default mixture weights follow the published workload shape: the tier
split dominated by production work, mostly single-task jobs, 85.3% of
durations under 1000 s, and per-tier final-state rates including the
monitoring tier's SCHEDULE-censored share.
"""

from __future__ import annotations

import hashlib
import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from itertools import accumulate
from pathlib import Path
from random import Random
from typing import List, Mapping, Optional, Sequence, Tuple

from .io import (
    TableKind,
    TraceBundle,
    assemble_bundle,
    bundle_records,
    write_table_csv,
    write_table_ndjson,
)
from .model import (
    CollectionEvent,
    CollectionType,
    EventType,
    InstanceEvent,
    InstanceType,
    MachineEvent,
    MachineEventType,
    MICROS_PER_DAY,
    MICROS_PER_SECOND,
    PriorityTier,
    Resources,
    SENTINEL_BEFORE,
    UsageRecord,
    VerticalScaling,
)
from .oracle import compute_ground_truth

TRACE_ANCHOR_US = 600 * MICROS_PER_SECOND
WINDOW_US = 300 * MICROS_PER_SECOND

_MACHINE_ID_BASE = 1
_ALLOC_ID_BASE = 10_000_000
_JOB_ID_BASE = 20_000_000

_TIER_PRIORITY_RANGES = {
    "FREE": (0, 99),
    "BEST_EFFORT_BATCH": (100, 115),
    "MID": (116, 119),
    "PRODUCTION": (120, 359),
    "MONITORING": (360, 450),
}

_TERMINAL_STATES = ("FINISH", "KILL", "FAIL")
_CENSOR_STATES = ("SUBMIT", "QUEUE", "ENABLE", "SCHEDULE")

# Tasks-per-job bin shares measured on the public trace.
_TABLE4_COUNTS = (4_067_109, 906_736, 149_516, 72_984, 7_715, 9_606)
_TABLE4_TOTAL = sum(_TABLE4_COUNTS)
DEFAULT_SIZE_MIX = tuple(c / _TABLE4_TOTAL for c in _TABLE4_COUNTS)

DEFAULT_TIER_MIX = (0.016, 0.091, 0.038, 0.852, 0.003)
DEFAULT_DURATION_MIX = (0.512, 0.341, 0.143, 0.004)
DEFAULT_FINAL_STATE_MIX: Mapping[str, Mapping[str, float]] = {
    "FREE": {"KILL": 0.492, "FINISH": 0.474, "FAIL": 0.034},
    "BEST_EFFORT_BATCH": {"KILL": 0.589, "FINISH": 0.369, "FAIL": 0.042},
    "MID": {"KILL": 0.495, "FINISH": 0.489, "FAIL": 0.016},
    "PRODUCTION": {"KILL": 0.765, "FINISH": 0.231, "FAIL": 0.004},
    "MONITORING": {"KILL": 0.092, "FINISH": 0.044, "FAIL": 0.813, "SCHEDULE": 0.051},
}
DEFAULT_VERTICAL_SCALING_MIX = (0.0, 0.068, 0.666, 0.266)
DEFAULT_MAX_PER_MACHINE_WEIGHTS = {"1": 35150.0, "2": 289.0, "10": 2.0, "25": 36.0}
DEFAULT_MAX_PER_SWITCH_WEIGHTS = {"1": 0.99, "2": 0.005, "104": 0.005}

_SIZE_BIN_RANGES = ((1, 1), (2, 10), (11, 100), (101, 1000), (1001, 2000), (2001, None))


class InfeasibleSpec(ValueError):
    """The generator parameters cannot produce a well-formed trace."""


def _check_mix(name: str, weights: Sequence[float], expected_len: int) -> None:
    if len(weights) != expected_len:
        raise InfeasibleSpec(f"{name} needs {expected_len} weights, got {len(weights)}")
    if any(w < 0 for w in weights):
        raise InfeasibleSpec(f"{name} has a negative weight")
    if abs(sum(weights) - 1.0) > 1e-9:
        raise InfeasibleSpec(f"{name} weights must sum to 1, got {sum(weights)!r}")


@dataclass(frozen=True)
class GeneratorSpec:
    seed: int = 1
    day_count: int = 3
    job_count: int = 1000
    machine_count: int = 50
    machine_capacity: Tuple[float, float] = (1.0, 1.0)
    tier_mix: Tuple[float, ...] = DEFAULT_TIER_MIX
    size_mix: Tuple[float, ...] = DEFAULT_SIZE_MIX
    duration_mix: Tuple[float, ...] = DEFAULT_DURATION_MIX
    final_state_mix: Mapping[str, Mapping[str, float]] = field(
        default_factory=lambda: DEFAULT_FINAL_STATE_MIX
    )
    queue_fraction: float = 0.3
    hosted_fraction: float = 0.007
    alloc_set_count: Optional[int] = None
    alloc_instances_per_set: int = 3
    parent_fraction: float = 0.64
    max_per_machine_fraction: float = 0.01
    max_per_machine_weights: Mapping[str, float] = field(
        default_factory=lambda: DEFAULT_MAX_PER_MACHINE_WEIGHTS
    )
    max_per_switch_fraction: float = 0.01
    max_per_switch_weights: Mapping[str, float] = field(
        default_factory=lambda: DEFAULT_MAX_PER_SWITCH_WEIGHTS
    )
    vertical_scaling_mix: Tuple[float, ...] = DEFAULT_VERTICAL_SCALING_MIX
    unscheduled_fraction: float = 0.48
    request_cpu_range: Tuple[float, float] = (0.01, 0.2)
    request_memory_range: Tuple[float, float] = (0.01, 0.2)
    zero_request_probability: float = 0.02
    usage_ratio_median: float = 0.7
    usage_ratio_sigma: float = 0.35
    request_update_fraction: float = 0.0
    machine_churn_fraction: float = 0.0
    machine_update_fraction: float = 0.0
    weekly_dip: float = 0.0
    sentinel_submit_fraction: float = 0.0
    max_job_size: int = 2500
    # Usage tiling dominates record counts for long-duration mixes; fixtures
    # that only probe event-level marginals can turn it off.
    emit_usage: bool = True

    def __post_init__(self) -> None:
        if self.job_count < 1:
            raise InfeasibleSpec("job_count must be >= 1")
        if self.machine_count < 1:
            raise InfeasibleSpec("machine_count must be >= 1")
        if self.day_count < 1:
            raise InfeasibleSpec("day_count must be >= 1")
        if self.max_job_size <= 2000:
            raise InfeasibleSpec("max_job_size must exceed the last bin edge (2000)")
        _check_mix("tier_mix", self.tier_mix, 5)
        _check_mix("size_mix", self.size_mix, 6)
        _check_mix("duration_mix", self.duration_mix, 4)
        _check_mix("vertical_scaling_mix", self.vertical_scaling_mix, 4)
        tiers = set(_TIER_PRIORITY_RANGES)
        if set(self.final_state_mix) != tiers:
            raise InfeasibleSpec("final_state_mix must cover exactly the five tiers")
        allowed = set(_TERMINAL_STATES) | set(_CENSOR_STATES)
        for tier, mix in self.final_state_mix.items():
            bad = set(mix) - allowed
            if bad:
                raise InfeasibleSpec(f"final_state_mix[{tier}] has unknown states {sorted(bad)}")
            _check_mix(f"final_state_mix[{tier}]", list(mix.values()), len(mix))
        for name in (
            "queue_fraction",
            "hosted_fraction",
            "parent_fraction",
            "max_per_machine_fraction",
            "max_per_switch_fraction",
            "unscheduled_fraction",
            "zero_request_probability",
            "request_update_fraction",
            "machine_churn_fraction",
            "machine_update_fraction",
            "weekly_dip",
            "sentinel_submit_fraction",
        ):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InfeasibleSpec(f"{name} must lie in [0, 1], got {value!r}")
        for name in ("request_cpu_range", "request_memory_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo < hi):
                raise InfeasibleSpec(f"{name} must be 0 < lo < hi")
        if any(c < 0 for c in self.machine_capacity):
            raise InfeasibleSpec("machine_capacity components must be non-negative")
        if self.usage_ratio_median <= 0 or self.usage_ratio_sigma < 0:
            raise InfeasibleSpec("usage ratio parameters must be positive")
        if self.duration_mix[3] > 0 and self.day_count < 2:
            raise InfeasibleSpec("durations beyond one day need a multi-day horizon")
        if self.hosted_fraction > 0 and self.resolved_alloc_set_count() < 1:
            raise InfeasibleSpec("hosted jobs need at least one alloc set")

    def resolved_alloc_set_count(self) -> int:
        if self.alloc_set_count is not None:
            return self.alloc_set_count
        if self.hosted_fraction <= 0:
            return 0
        return max(1, self.job_count // 2000)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "day_count": self.day_count,
            "job_count": self.job_count,
            "machine_count": self.machine_count,
            "machine_capacity": list(self.machine_capacity),
            "tier_mix": list(self.tier_mix),
            "size_mix": list(self.size_mix),
            "duration_mix": list(self.duration_mix),
            "final_state_mix": {t: dict(m) for t, m in self.final_state_mix.items()},
            "queue_fraction": self.queue_fraction,
            "hosted_fraction": self.hosted_fraction,
            "alloc_set_count": self.alloc_set_count,
            "alloc_instances_per_set": self.alloc_instances_per_set,
            "parent_fraction": self.parent_fraction,
            "max_per_machine_fraction": self.max_per_machine_fraction,
            "max_per_machine_weights": dict(self.max_per_machine_weights),
            "max_per_switch_fraction": self.max_per_switch_fraction,
            "max_per_switch_weights": dict(self.max_per_switch_weights),
            "vertical_scaling_mix": list(self.vertical_scaling_mix),
            "unscheduled_fraction": self.unscheduled_fraction,
            "request_cpu_range": list(self.request_cpu_range),
            "request_memory_range": list(self.request_memory_range),
            "zero_request_probability": self.zero_request_probability,
            "usage_ratio_median": self.usage_ratio_median,
            "usage_ratio_sigma": self.usage_ratio_sigma,
            "request_update_fraction": self.request_update_fraction,
            "machine_churn_fraction": self.machine_churn_fraction,
            "machine_update_fraction": self.machine_update_fraction,
            "weekly_dip": self.weekly_dip,
            "sentinel_submit_fraction": self.sentinel_submit_fraction,
            "max_job_size": self.max_job_size,
            "emit_usage": self.emit_usage,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorSpec":
        defaults = cls()
        known = set(defaults.to_dict())
        unknown = set(data) - known
        if unknown:
            raise InfeasibleSpec(f"unknown generator spec keys: {sorted(unknown)}")
        kwargs = dict(data)
        for key in ("machine_capacity", "request_cpu_range", "request_memory_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        for key in ("tier_mix", "size_mix", "duration_mix", "vertical_scaling_mix"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


# The golden mini-trace used throughout the test suite.
GOLDEN_SPEC = GeneratorSpec(seed=7, job_count=1000, day_count=3, machine_count=50)


class _Categorical:
    """Inverse-CDF sampler over (label, weight) pairs, order-stable."""

    def __init__(self, pairs: Sequence[Tuple[object, float]]):
        self.labels = [label for label, _ in pairs]
        self.cums = list(accumulate(w for _, w in pairs))
        self.total = self.cums[-1]

    def draw(self, rng: Random):
        x = rng.random() * self.total
        return self.labels[min(bisect_right(self.cums, x), len(self.labels) - 1)]


def _log_uniform_us(rng: Random, lo_us: int, hi_us: int) -> int:
    u = rng.random()
    value = math.exp(math.log(lo_us) + u * (math.log(hi_us) - math.log(lo_us)))
    return min(hi_us - 1, max(lo_us, int(value)))


def _log_uniform(rng: Random, lo: float, hi: float) -> float:
    u = rng.random()
    return math.exp(math.log(lo) + u * (math.log(hi) - math.log(lo)))


def generate(spec: GeneratorSpec) -> Tuple[TraceBundle, dict]:
    """Produce a bundle and its exact ground truth (default config)."""
    rng = Random(spec.seed)
    t0 = TRACE_ANCHOR_US
    horizon_end = t0 + spec.day_count * MICROS_PER_DAY
    cap_end = horizon_end - MICROS_PER_SECOND  # running-to-end cutoff

    machine_events = _generate_machines(spec, rng, t0, horizon_end)
    collection_events: List[CollectionEvent] = []
    instance_events: List[InstanceEvent] = []
    usage_records: List[UsageRecord] = []

    alloc_ids = _generate_alloc_sets(
        spec, rng, t0, collection_events, instance_events
    )

    tier_sampler = _Categorical(list(zip(PriorityTier, spec.tier_mix)))
    size_sampler = _Categorical(list(zip(range(6), spec.size_mix)))
    duration_sampler = _Categorical(list(zip(range(4), spec.duration_mix)))
    final_samplers = {
        tier: _Categorical(sorted(mix.items()))
        for tier, mix in spec.final_state_mix.items()
    }
    vscale_sampler = _Categorical(list(zip(VerticalScaling, spec.vertical_scaling_mix)))
    mpm_sampler = _Categorical(
        sorted(((int(k), w) for k, w in spec.max_per_machine_weights.items()))
    )
    mps_sampler = _Categorical(
        sorted(((int(k), w) for k, w in spec.max_per_switch_weights.items()))
    )

    duration_bands_us = _duration_bands_us(spec)
    fallback_cpu = math.sqrt(spec.request_cpu_range[0] * spec.request_cpu_range[1])
    fallback_mem = math.sqrt(spec.request_memory_range[0] * spec.request_memory_range[1])

    for j in range(spec.job_count):
        cid = _JOB_ID_BASE + 1 + j
        tier = tier_sampler.draw(rng)
        prio_lo, prio_hi = _TIER_PRIORITY_RANGES[tier.name]
        priority = rng.randint(prio_lo, prio_hi)
        final = final_samplers[tier.name].draw(rng)
        terminal = final in _TERMINAL_STATES

        has_queue = final == "QUEUE" or rng.random() < spec.queue_fraction
        gap_queue = rng.randint(MICROS_PER_SECOND, 5 * MICROS_PER_SECOND)
        gap_enable = (
            rng.randint(MICROS_PER_SECOND, 60 * MICROS_PER_SECOND)
            if has_queue
            else rng.randint(MICROS_PER_SECOND, 5 * MICROS_PER_SECOND)
        )
        gap_schedule = rng.randint(MICROS_PER_SECOND, 10 * MICROS_PER_SECOND)
        chain_span = (gap_queue if has_queue else 0) + gap_enable + gap_schedule

        duration_us = 0
        if terminal:
            band = duration_sampler.draw(rng)
            lo_us, hi_us = duration_bands_us[band]
            duration_us = _log_uniform_us(rng, lo_us, hi_us)

        reserve = chain_span + duration_us + 2 * MICROS_PER_SECOND
        min_start = t0 + MICROS_PER_SECOND
        max_start = horizon_end - reserve
        if max_start <= min_start:
            raise InfeasibleSpec("horizon too short for the sampled job chain")
        submit = _draw_submit(spec, rng, t0, min_start, max_start)

        t_queue = submit + gap_queue
        t_enable = (t_queue if has_queue else submit) + gap_enable
        t_schedule = t_enable + gap_schedule
        t_terminal = t_schedule + duration_us

        alloc_id = (
            alloc_ids[rng.randrange(len(alloc_ids))]
            if alloc_ids and rng.random() < spec.hosted_fraction
            else None
        )
        parent_id = (
            _JOB_ID_BASE + 1 + rng.randrange(spec.job_count)
            if rng.random() < spec.parent_fraction
            else None
        )
        mpm = mpm_sampler.draw(rng) if rng.random() < spec.max_per_machine_fraction else None
        mps = mps_sampler.draw(rng) if rng.random() < spec.max_per_switch_fraction else None
        vscale = vscale_sampler.draw(rng)

        submit_recorded = (
            SENTINEL_BEFORE
            if rng.random() < spec.sentinel_submit_fraction
            else submit
        )

        chain: List[Tuple[int, EventType]] = [(submit_recorded, EventType.SUBMIT)]
        if final != "SUBMIT":
            if has_queue:
                chain.append((t_queue, EventType.QUEUE))
            if final != "QUEUE":
                chain.append((t_enable, EventType.ENABLE))
                if final != "ENABLE":
                    chain.append((t_schedule, EventType.SCHEDULE))
                    if terminal:
                        chain.append((t_terminal, EventType[final]))

        for time, event_type in chain:
            collection_events.append(
                CollectionEvent(
                    time=time,
                    collection_id=cid,
                    event_type=event_type,
                    collection_type=CollectionType.JOB,
                    priority=priority,
                    alloc_collection_id=alloc_id,
                    parent_collection_id=parent_id,
                    max_per_machine=mpm,
                    max_per_switch=mps,
                    vertical_scaling=vscale,
                )
            )

        _generate_tasks(
            spec,
            rng,
            cid,
            priority,
            alloc_id,
            final,
            submit,
            t_schedule,
            t_terminal,
            cap_end,
            size_sampler,
            fallback_cpu,
            fallback_mem,
            t0,
            instance_events,
            usage_records,
        )

    bundle = assemble_bundle(
        collection_events, instance_events, usage_records, machine_events
    )
    return bundle, compute_ground_truth(bundle)


def _duration_bands_us(spec: GeneratorSpec) -> List[Tuple[int, int]]:
    cap_s = spec.day_count * 86_400 - 7_200
    bands = [
        (1, 100),
        (100, 1000),
        (1000, min(86_400, cap_s)),
        (86_400, max(86_401, cap_s)),
    ]
    return [(lo * MICROS_PER_SECOND, hi * MICROS_PER_SECOND) for lo, hi in bands]


def _draw_submit(spec, rng, t0, min_start, max_start) -> int:
    submit = rng.randint(min_start, max_start)
    if spec.weekly_dip > 0:
        # Every second week ends with a dip in submissions.
        for _ in range(4):
            day = (submit - t0) // MICROS_PER_DAY
            if day % 14 >= 12 and rng.random() < spec.weekly_dip:
                submit = rng.randint(min_start, max_start)
            else:
                break
    return submit


def _generate_machines(spec, rng, t0, horizon_end) -> List[MachineEvent]:
    capacity = Resources(*spec.machine_capacity)
    events: List[MachineEvent] = []
    span = horizon_end - t0
    for i in range(spec.machine_count):
        machine_id = _MACHINE_ID_BASE + i
        events.append(
            MachineEvent(
                time=t0,
                machine_id=machine_id,
                event_type=MachineEventType.ADD,
                capacity=capacity,
            )
        )
        current = capacity
        if rng.random() < spec.machine_update_fraction:
            t_upd = t0 + int(span * (0.1 + 0.8 * rng.random()))
            current = Resources(
                capacity.cpus * (0.5 + rng.random()), capacity.memory * (0.5 + rng.random())
            )
            events.append(
                MachineEvent(
                    time=t_upd,
                    machine_id=machine_id,
                    event_type=MachineEventType.UPDATE,
                    capacity=current,
                )
            )
        if rng.random() < spec.machine_churn_fraction:
            t_remove = t0 + int(span * (0.2 + 0.5 * rng.random()))
            events.append(
                MachineEvent(
                    time=t_remove,
                    machine_id=machine_id,
                    event_type=MachineEventType.REMOVE,
                    capacity=current,
                )
            )
            if rng.random() < 0.5:
                t_back = t_remove + int((horizon_end - t_remove) * 0.5 * rng.random()) + 1
                events.append(
                    MachineEvent(
                        time=t_back,
                        machine_id=machine_id,
                        event_type=MachineEventType.ADD,
                        capacity=current,
                    )
                )
    events.sort(key=lambda e: (e.time, e.machine_id, int(e.event_type)))
    return events


def _generate_alloc_sets(
    spec, rng, t0, collection_events, instance_events
) -> List[int]:
    alloc_ids = []
    for i in range(spec.resolved_alloc_set_count()):
        cid = _ALLOC_ID_BASE + 1 + i
        alloc_ids.append(cid)
        base = t0 + (i + 1) * MICROS_PER_SECOND
        priority = 200
        for offset, event_type in (
            (0, EventType.SUBMIT),
            (MICROS_PER_SECOND, EventType.ENABLE),
            (2 * MICROS_PER_SECOND, EventType.SCHEDULE),
        ):
            collection_events.append(
                CollectionEvent(
                    time=base + offset,
                    collection_id=cid,
                    event_type=event_type,
                    collection_type=CollectionType.ALLOC_SET,
                    priority=priority,
                )
            )
        for index in range(spec.alloc_instances_per_set):
            machine_id = _MACHINE_ID_BASE + rng.randrange(spec.machine_count)
            request = Resources(
                _log_uniform(rng, *spec.request_cpu_range),
                _log_uniform(rng, *spec.request_memory_range),
            )
            for offset, event_type, machine in (
                (0, EventType.SUBMIT, None),
                (2 * MICROS_PER_SECOND, EventType.SCHEDULE, machine_id),
            ):
                instance_events.append(
                    InstanceEvent(
                        time=base + offset,
                        collection_id=cid,
                        instance_index=index,
                        event_type=event_type,
                        instance_type=InstanceType.ALLOC_INSTANCE,
                        priority=priority,
                        resource_request=request,
                        machine_id=machine,
                        alloc_collection_id=None,
                    )
                )
    return alloc_ids


def _sample_size(rng: Random, size_sampler: _Categorical, max_job_size: int) -> int:
    bin_index = size_sampler.draw(rng)
    lo, hi = _SIZE_BIN_RANGES[bin_index]
    if hi is None:
        hi = max_job_size
    return rng.randint(lo, hi) if hi > lo else lo


def _generate_tasks(
    spec,
    rng,
    cid,
    priority,
    alloc_id,
    final,
    submit,
    t_schedule,
    t_terminal,
    cap_end,
    size_sampler,
    fallback_cpu,
    fallback_mem,
    t0,
    instance_events,
    usage_records,
):
    size = _sample_size(rng, size_sampler, spec.max_job_size)
    job_scheduled = final in _TERMINAL_STATES or final == "SCHEDULE"
    terminal = final in _TERMINAL_STATES
    task_terminal_type = EventType[final] if terminal else None

    for index in range(size):
        request = Resources(
            0.0 if rng.random() < spec.zero_request_probability
            else _log_uniform(rng, *spec.request_cpu_range),
            0.0 if rng.random() < spec.zero_request_probability
            else _log_uniform(rng, *spec.request_memory_range),
        )

        def emit(time, event_type, machine_id=None, req=request):
            instance_events.append(
                InstanceEvent(
                    time=time,
                    collection_id=cid,
                    instance_index=index,
                    event_type=event_type,
                    instance_type=InstanceType.TASK,
                    priority=priority,
                    resource_request=req,
                    machine_id=machine_id,
                    alloc_collection_id=alloc_id,
                )
            )

        emit(submit, EventType.SUBMIT)
        scheduled = job_scheduled and rng.random() >= spec.unscheduled_fraction
        if not scheduled:
            if terminal:
                emit(t_terminal, EventType.KILL)
            continue

        machine_id = _MACHINE_ID_BASE + rng.randrange(spec.machine_count)
        run_end = t_terminal if terminal else cap_end
        max_jitter = min(2 * MICROS_PER_SECOND, max(0, (run_end - t_schedule) // 2))
        task_start = t_schedule + (rng.randint(0, max_jitter) if max_jitter else 0)
        emit(task_start, EventType.SCHEDULE, machine_id)

        # Request step function: an optional mid-run update rescales it.
        steps = [(task_start, request)]
        if (
            terminal
            and spec.request_update_fraction > 0
            and run_end - task_start >= 20 * MICROS_PER_SECOND
            and rng.random() < spec.request_update_fraction
        ):
            t_upd = task_start + int((run_end - task_start) * (0.2 + 0.6 * rng.random()))
            factor = 0.5 + rng.random()
            updated = Resources(
                request.cpus * factor if request.cpus else 0.0,
                request.memory * factor if request.memory else 0.0,
            )
            emit(t_upd, EventType.UPDATE_RUNNING, machine_id, updated)
            steps.append((t_upd, updated))

        if terminal:
            emit(t_terminal, task_terminal_type, machine_id, steps[-1][1])

        if not spec.emit_usage:
            continue
        _tile_usage(
            spec,
            rng,
            cid,
            index,
            machine_id,
            task_start,
            run_end,
            steps,
            fallback_cpu,
            fallback_mem,
            t0,
            usage_records,
        )


def _tile_usage(
    spec,
    rng,
    cid,
    index,
    machine_id,
    start,
    end,
    steps,
    fallback_cpu,
    fallback_mem,
    t0,
    usage_records,
):
    """Tile [start, end) with grid-aligned records of at most one window."""
    cur = start
    while cur < end:
        boundary = t0 + ((cur - t0) // WINDOW_US + 1) * WINDOW_US
        tile_end = min(boundary, end)
        request = steps[0][1]
        for step_time, step_request in steps:
            if step_time <= cur:
                request = step_request
            else:
                break
        ratio = math.exp(
            rng.gauss(math.log(spec.usage_ratio_median), spec.usage_ratio_sigma)
        )
        cpus = ratio * (request.cpus if request.cpus > 0 else fallback_cpu)
        memory = ratio * (request.memory if request.memory > 0 else fallback_mem)
        usage_records.append(
            UsageRecord(
                start_time=cur,
                end_time=tile_end,
                collection_id=cid,
                instance_index=index,
                machine_id=machine_id,
                average_usage=Resources(cpus, memory),
            )
        )
        cur = tile_end


# --- fixture output -------------------------------------------------------

def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_fixture(bundle: TraceBundle, ground_truth: dict, directory: Path) -> dict:
    """Write table files (CSV and NDJSON), ground truth, and a manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "trace_start": bundle.trace_start,
        "trace_end": bundle.trace_end,
        "tables": {},
    }
    for kind in TableKind:
        records = bundle_records(bundle, kind)
        csv_path = directory / f"{kind.stem}.csv"
        with open(csv_path, "w", encoding="utf-8", newline="") as fh:
            write_table_csv(records, kind, fh)
        ndjson_path = directory / f"{kind.stem}.ndjson"
        with open(ndjson_path, "w", encoding="utf-8", newline="") as fh:
            write_table_ndjson(records, kind, fh)
        manifest["tables"][kind.stem] = {
            "records": len(records),
            "csv_sha256": _sha256_file(csv_path),
            "ndjson_sha256": _sha256_file(ndjson_path),
        }
    gt_path = directory / "ground_truth.json"
    with open(gt_path, "w", encoding="utf-8", newline="") as fh:
        json.dump(ground_truth, fh, sort_keys=True, indent=2)
        fh.write("\n")
    manifest["ground_truth_sha256"] = _sha256_file(gt_path)
    with open(directory / "manifest.json", "w", encoding="utf-8", newline="") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return manifest
