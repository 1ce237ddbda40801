"""Brute-force recomputation of every report field from raw records.

This is the verification oracle for the analysis pipeline: plain
single-pass loops and sort-based definitions, written independently of
the streaming folds and the partitioned engine. Synthetic fixtures ship
the output as their ground truth, and tests require the pipeline to
reproduce it exactly (integer counts) or to full float precision
(aggregates, which both sides compute as correctly rounded sums).
"""

from __future__ import annotations

from collections import Counter
from math import fsum
from typing import Dict, List, Optional, Tuple

from .config import AnalysisConfig, DURATION_FROM_SCHEDULE
from .io import TraceBundle
from .model import (
    CollectionType,
    DURATION_EVENTS,
    EventType,
    InstanceType,
    MachineEventType,
    MICROS_PER_DAY,
    MICROS_PER_SECOND,
    PriorityTier,
    TERMINAL_EVENTS,
    VerticalScaling,
    classify_priority_tier,
    day_count_for_horizon,
    is_sentinel,
    job_size_bin,
    JOB_SIZE_BINS,
)

_DAILY_LABELS = ("SUBMIT", "SCHEDULE", "FINISH", "KILL")
_TIER_NAMES = tuple(t.name for t in PriorityTier)
_STATE_NAMES = tuple(t.name for t in sorted(DURATION_EVENTS))


def compute_ground_truth(bundle: TraceBundle, config: Optional[AnalysisConfig] = None) -> dict:
    config = config or AnalysisConfig()
    start = bundle.trace_start
    end = bundle.trace_end
    day_count = day_count_for_horizon(end - start)
    window_us = config.window_seconds * MICROS_PER_SECOND
    window_count = (end - start) // window_us + 1

    lifecycle, job_durations = _lifecycle(bundle, config)
    usage_windows = _usage_windows(bundle, start, window_us, window_count)
    gt = {
        "heterogeneity": _heterogeneity(bundle, config, start, day_count),
        "lifecycle": lifecycle,
        "resources": _resources(bundle, config, start, end, window_us, window_count, usage_windows),
        "cluster": _cluster(bundle, config, start, end, day_count, window_us, window_count, usage_windows),
        "job_durations": job_durations,
        "grid": {
            "trace_start": start,
            "trace_end": end,
            "day_count": day_count,
            "window_count": window_count,
        },
    }
    return gt


# --- heterogeneity -------------------------------------------------------

def _dist(counts: Dict[str, int]) -> dict:
    return {"counts": dict(counts), "total": sum(counts.values())}


def _heterogeneity(bundle, config, start, day_count) -> dict:
    boundaries = config.tier_boundaries
    coll = bundle.collection_events
    inst = bundle.instance_events

    coll_types = Counter(e.event_type.name for e in coll)
    inst_types = Counter(e.event_type.name for e in inst)

    event_days = [dict.fromkeys(_DAILY_LABELS, 0) for _ in range(day_count)]
    event_exclusions = 0
    tier_days = [dict.fromkeys(_TIER_NAMES, 0) for _ in range(day_count)]
    tier_exclusions = 0
    for e in coll:
        name = e.event_type.name
        if name in _DAILY_LABELS:
            if is_sentinel(e.time):
                event_exclusions += 1
            else:
                event_days[(e.time - start) // MICROS_PER_DAY][name] += 1
        if is_sentinel(e.time):
            tier_exclusions += 1
        else:
            tier = classify_priority_tier(e.priority, boundaries).name
            tier_days[(e.time - start) // MICROS_PER_DAY][tier] += 1

    firsts: dict = {}
    for e in coll:
        cur = firsts.get(e.collection_id)
        if cur is None or (e.time, int(e.event_type)) < (cur.time, int(cur.event_type)):
            firsts[e.collection_id] = e
    jobs = [e for e in firsts.values() if e.collection_type == CollectionType.JOB]

    tier_counts = dict.fromkeys(_TIER_NAMES, 0)
    for e in jobs:
        tier_counts[classify_priority_tier(e.priority, boundaries).name] += 1

    hosting = {"top_level": 0, "hosted": 0}
    for e in jobs:
        hosting["hosted" if e.alloc_collection_id is not None else "top_level"] += 1

    parent = {"with_parent": 0, "without_parent": 0}
    for e in firsts.values():
        parent["with_parent" if e.parent_collection_id is not None else "without_parent"] += 1

    mpm: Counter = Counter()
    mps: Counter = Counter()
    for e in firsts.values():
        mpm["unset" if e.max_per_machine is None else str(e.max_per_machine)] += 1
        mps["unset" if e.max_per_switch is None else str(e.max_per_switch)] += 1

    vs = dict.fromkeys((v.name for v in VerticalScaling), 0)
    for e in jobs:
        vs[e.vertical_scaling.name] += 1

    sizes: Dict[int, int] = {}
    for e in inst:
        if e.instance_type == InstanceType.TASK:
            if e.instance_index > sizes.get(e.collection_id, -1):
                sizes[e.collection_id] = e.instance_index
    size_counts = dict.fromkeys(JOB_SIZE_BINS, 0)
    for top in sizes.values():
        size_counts[job_size_bin(top + 1)] += 1

    placed: Dict[Tuple[int, int], bool] = {}
    for e in inst:
        key = (e.collection_id, e.instance_index)
        placed[key] = placed.get(key, False) or e.machine_id is not None
    scheduled = sum(1 for v in placed.values() if v)
    sched = {
        "fraction": scheduled / len(placed) if placed else 0.0,
        "instances": len(placed),
        "scheduled": scheduled,
        "empty": not placed,
    }

    return {
        "collection_event_types": _dist(coll_types),
        "instance_event_types": _dist(inst_types),
        "events_per_day": {
            "labels": list(_DAILY_LABELS),
            "days": event_days,
            "exclusions": event_exclusions,
        },
        "tiers_per_day": {
            "labels": list(_TIER_NAMES),
            "days": tier_days,
            "exclusions": tier_exclusions,
        },
        "tier_distribution": _dist(tier_counts),
        "alloc_hosting": _dist(hosting),
        "parent_presence": _dist(parent),
        "max_per_machine": _dist(mpm),
        "max_per_switch": _dist(mps),
        "vertical_scaling": _dist(vs),
        "job_sizes": _dist(size_counts),
        "scheduled_fraction": sched,
    }


# --- lifecycle ------------------------------------------------------------

def _band_labels(edges) -> List[str]:
    labels = [f"<{edges[0]}s"]
    labels.extend(f"{a}-{b}s" for a, b in zip(edges, edges[1:]))
    labels.append(f">={edges[-1]}s")
    return labels


def _lifecycle(bundle, config) -> Tuple[dict, dict]:
    boundaries = config.tier_boundaries
    edges = config.duration_band_edges
    labels = _band_labels(edges)
    origin_type = (
        EventType.SCHEDULE
        if config.duration_mode == DURATION_FROM_SCHEDULE
        else EventType.SUBMIT
    )

    groups: Dict[int, list] = {}
    for e in bundle.collection_events:
        groups.setdefault(e.collection_id, []).append(e)

    band_counts = dict.fromkeys(labels, 0)
    censored = malformed = unmeasured = 0
    total_jobs = 0
    final_by_tier: Dict[str, Counter] = {name: Counter() for name in _TIER_NAMES}
    states = {
        name: {"count": 0, "sum_us": 0, "min_us": None, "max_us": None}
        for name in _STATE_NAMES
    }
    job_durations: Dict[str, Optional[int]] = {}

    for cid, events in groups.items():
        events.sort(key=lambda e: (e.time, int(e.event_type)))
        if events[0].collection_type != CollectionType.JOB:
            continue
        total_jobs += 1
        tier = classify_priority_tier(events[0].priority, boundaries).name
        final_by_tier[tier][events[-1].event_type.name] += 1

        origin_time = None
        terminal_time = None
        saw_terminal = False
        for e in events:
            if e.event_type in TERMINAL_EVENTS:
                saw_terminal = True
                if terminal_time is None and not is_sentinel(e.time):
                    terminal_time = e.time
            elif (
                e.event_type == origin_type
                and origin_time is None
                and not is_sentinel(e.time)
            ):
                origin_time = e.time

        duration_us = None
        if not saw_terminal:
            censored += 1
        elif terminal_time is None or origin_time is None:
            unmeasured += 1
        elif terminal_time < origin_time:
            malformed += 1
        else:
            duration_us = terminal_time - origin_time
            placed = len(edges)
            for i, edge in enumerate(edges):
                if duration_us < edge * 1_000_000:
                    placed = i
                    break
            band_counts[labels[placed]] += 1
        job_durations[str(cid)] = duration_us

        for prev, nxt in zip(events, events[1:]):
            if prev.event_type not in DURATION_EVENTS:
                continue
            if is_sentinel(prev.time) or is_sentinel(nxt.time):
                continue
            delta = nxt.time - prev.time
            s = states[prev.event_type.name]
            s["count"] += 1
            s["sum_us"] += delta
            if s["min_us"] is None or delta < s["min_us"]:
                s["min_us"] = delta
            if s["max_us"] is None or delta > s["max_us"]:
                s["max_us"] = delta

    final_states = {}
    for tier in _TIER_NAMES:
        counts = final_by_tier[tier]
        total = sum(counts.values())
        final_states[tier] = {
            "counts": dict(counts),
            "fractions": {label: n / total for label, n in counts.items()},
            "total": total,
        }

    state_durations = {}
    for name in _STATE_NAMES:
        s = states[name]
        state_durations[name] = {
            "count": s["count"],
            "total_seconds": s["sum_us"] / 1e6,
            "mean_seconds": s["sum_us"] / s["count"] / 1e6 if s["count"] else None,
            "min_seconds": s["min_us"] / 1e6 if s["min_us"] is not None else None,
            "max_seconds": s["max_us"] / 1e6 if s["max_us"] is not None else None,
        }

    section = {
        "total_jobs": total_jobs,
        "duration_histogram": {
            "bands": _dist(band_counts),
            "censored": censored,
            "malformed": malformed,
            "unmeasured": unmeasured,
        },
        "final_states_by_tier": final_states,
        "state_durations": state_durations,
    }
    return section, job_durations


# --- resources ------------------------------------------------------------

class _Profile:
    __slots__ = ("steps", "run_start", "run_end", "malformed")

    def __init__(self, steps, run_start, run_end, malformed):
        self.steps = steps  # list of (time, cpus, memory), ascending
        self.run_start = run_start
        self.run_end = run_end
        self.malformed = malformed

    def value_at(self, t):
        chosen = self.steps[0]
        for step in self.steps:
            if step[0] <= t:
                chosen = step
            else:
                break
        return chosen[1], chosen[2]


def _task_profiles(bundle, include_alloc_instances, trace_end):
    groups: Dict[Tuple[int, int], list] = {}
    for e in bundle.instance_events:
        if not include_alloc_instances and e.instance_type != InstanceType.TASK:
            continue
        groups.setdefault((e.collection_id, e.instance_index), []).append(e)
    profiles = {}
    for key, events in groups.items():
        events.sort(key=lambda e: (e.time, int(e.event_type)))
        steps = [
            (e.time, e.resource_request.cpus, e.resource_request.memory)
            for e in events
            if not is_sentinel(e.time)
        ]
        if not steps:
            first = events[0]
            steps = [(0, first.resource_request.cpus, first.resource_request.memory)]
        run_start = None
        terminal = None
        for e in events:
            if is_sentinel(e.time):
                continue
            if e.event_type == EventType.SCHEDULE and run_start is None:
                run_start = e.time
            elif e.event_type in TERMINAL_EVENTS and terminal is None:
                terminal = e.time
        malformed = False
        run_end = None
        if run_start is not None:
            if terminal is None:
                run_end = trace_end
            elif terminal < run_start:
                run_start = None
                malformed = True
            else:
                run_end = terminal
        profiles[key] = _Profile(steps, run_start, run_end, malformed)
    return profiles


def _usage_windows(bundle, start, window_us, window_count):
    per_window: Dict[int, list] = {}
    for u in bundle.instance_usage:
        if is_sentinel(u.start_time):
            continue
        w = (u.start_time - start) // window_us
        per_window.setdefault(w, []).append((u.average_usage.cpus, u.average_usage.memory))
    return [
        (
            fsum(c for c, _ in per_window.get(w, ())),
            fsum(m for _, m in per_window.get(w, ())),
        )
        for w in range(window_count)
    ]


def _daily(values, windows_per_day):
    days = []
    counts = []
    for lo in range(0, len(values), windows_per_day):
        chunk = values[lo : lo + windows_per_day]
        days.append(
            [
                fsum(c for c, _ in chunk) / len(chunk),
                fsum(m for _, m in chunk) / len(chunk),
            ]
        )
        counts.append(len(chunk))
    partial = bool(counts) and counts[-1] != windows_per_day
    return {"days": days, "window_counts": counts, "partial_last_day": partial}


def _resources(bundle, config, start, end, window_us, window_count, usage_windows):
    profiles = _task_profiles(bundle, config.include_alloc_instances, end)

    request_lists: Dict[int, list] = {}
    unlimited = 0
    malformed_instances = 0
    for profile in profiles.values():
        if profile.malformed:
            malformed_instances += 1
        if profile.run_start is None:
            continue
        w_lo = (profile.run_start - start) // window_us
        w_hi = (profile.run_end - 1 - start) // window_us + 1
        w_hi = min(w_hi, window_count)
        saw_zero = False
        for w in range(w_lo, w_hi):
            cpus, memory = profile.value_at(start + w * window_us)
            if cpus == 0.0 or memory == 0.0:
                saw_zero = True
            request_lists.setdefault(w, []).append((cpus, memory))
        if saw_zero and w_hi > w_lo:
            unlimited += 1
    request_windows = [
        (
            fsum(c for c, _ in request_lists.get(w, ())),
            fsum(m for _, m in request_lists.get(w, ())),
        )
        for w in range(window_count)
    ]

    sentinel_usage = 0
    spanning = 0
    without_instance = 0
    exceed_cpu = 0
    exceed_mem = 0
    for u in bundle.instance_usage:
        if is_sentinel(u.start_time):
            sentinel_usage += 1
            continue
        w = (u.start_time - start) // window_us
        if (u.end_time - 1 - start) // window_us != w:
            spanning += 1
        profile = profiles.get((u.collection_id, u.instance_index))
        if profile is None:
            without_instance += 1
            continue
        req_c, req_m = profile.value_at(start + w * window_us)
        if req_c > 0 and u.average_usage.cpus > req_c:
            exceed_cpu += 1
        if req_m > 0 and u.average_usage.memory > req_m:
            exceed_mem += 1

    wpd = MICROS_PER_DAY // window_us
    return {
        "requested_per_day": _daily(request_windows, wpd),
        "consumed_per_day": _daily(usage_windows, wpd),
        "unlimited_tasks": unlimited,
        "exceedance": {"cpu_windows": exceed_cpu, "memory_windows": exceed_mem},
        "malformed_instances": malformed_instances,
        "sentinel_usage_records": sentinel_usage,
        "boundary_spanning_usage": spanning,
        "usage_without_instance": without_instance,
    }


# --- cluster ----------------------------------------------------------------

class _Machine:
    __slots__ = ("presence", "rows", "remove_without_add", "assumed_preexisting")

    def __init__(self, presence, rows, remove_without_add, assumed_preexisting):
        self.presence = presence
        self.rows = rows  # (time, cpus, memory) ascending, non-sentinel
        self.remove_without_add = remove_without_add
        self.assumed_preexisting = assumed_preexisting

    def present_at(self, t):
        return any(a <= t < b for a, b in self.presence)

    def capacity_at(self, t):
        chosen = self.rows[0]
        for row in self.rows:
            if row[0] <= t:
                chosen = row
            else:
                break
        return chosen[1], chosen[2]


def _machine_states(bundle, start, end):
    groups: Dict[int, list] = {}
    for e in bundle.machine_events:
        groups.setdefault(e.machine_id, []).append(e)
    distinct = len(groups)
    machines = []
    for events in groups.values():
        events.sort(key=lambda e: (e.time, int(e.event_type)))
        events = [e for e in events if not is_sentinel(e.time)]
        if not events:
            continue
        presence = []
        open_since = None
        removals = 0
        preexisting = False
        saw_add = False
        if events[0].event_type == MachineEventType.UPDATE:
            open_since = start
            preexisting = True
        for e in events:
            if e.event_type == MachineEventType.ADD:
                saw_add = True
                if open_since is None:
                    open_since = e.time
            elif e.event_type == MachineEventType.REMOVE:
                if open_since is not None:
                    if e.time > open_since:
                        presence.append((open_since, e.time))
                    open_since = None
                else:
                    removals += 1
                    if not presence and not saw_add:
                        preexisting = True
                        if e.time > start:
                            presence.append((start, e.time))
        if open_since is not None and end > open_since:
            presence.append((open_since, end))
        rows = [(e.time, e.capacity.cpus, e.capacity.memory) for e in events]
        machines.append(_Machine(presence, rows, removals, preexisting))
    return machines, distinct


def _cdf(values, excluded):
    n = len(values)
    if n == 0:
        return {"points": [], "included_windows": 0, "excluded_windows": excluded}
    ordered = sorted(values)
    points = []
    for i, x in enumerate(ordered):
        if i + 1 == n or ordered[i + 1] != x:
            points.append([x, (i + 1) / n])
    return {"points": points, "included_windows": n, "excluded_windows": excluded}


def _cluster(bundle, config, start, end, day_count, window_us, window_count, usage_windows):
    machines, distinct_machines = _machine_states(bundle, start, end)

    per_day = []
    for d in range(day_count):
        day_lo = start + d * MICROS_PER_DAY
        day_hi = day_lo + MICROS_PER_DAY
        n = 0
        for m in machines:
            if any(a < day_hi and b > day_lo for a, b in m.presence):
                n += 1
        per_day.append(n)

    capacity_windows = []
    for w in range(window_count):
        ws = start + w * window_us
        cs = []
        ms = []
        for m in machines:
            if m.present_at(ws):
                c, mem = m.capacity_at(ws)
                cs.append(c)
                ms.append(mem)
        capacity_windows.append((fsum(cs), fsum(ms)))

    wpd = MICROS_PER_DAY // window_us
    capacity_daily = _daily(capacity_windows, wpd)
    usage_daily = _daily(usage_windows, wpd)
    utilization = []
    for (uc, um), (cc, cm) in zip(usage_daily["days"], capacity_daily["days"]):
        utilization.append(
            [uc / cc if cc != 0 else None, um / cm if cm != 0 else None]
        )

    cdfs = {}
    for metric in ("cpu", "memory", "combined"):
        values = []
        excluded = 0
        for (uc, um), (cc, cm) in zip(usage_windows, capacity_windows):
            if metric == "cpu":
                if cc == 0:
                    excluded += 1
                else:
                    values.append(uc / cc)
            elif metric == "memory":
                if cm == 0:
                    excluded += 1
                else:
                    values.append(um / cm)
            else:
                if cc == 0 or cm == 0:
                    excluded += 1
                else:
                    values.append(max(uc / cc, um / cm))
        cdfs[metric] = _cdf(values, excluded)

    return {
        "machine_count": distinct_machines,
        "machines_per_day": per_day,
        "capacity_per_day": capacity_daily,
        "utilization_per_day": utilization,
        "utilization_cdf": cdfs,
        "remove_without_add": sum(m.remove_without_add for m in machines),
        "assumed_preexisting": sum(1 for m in machines if m.assumed_preexisting),
    }
