"""Report assembly and serialization.

A report is one JSON document: metadata (tool, config, digests), one
section per analysis, and a data-quality roll-up. The digest covers the
config, the bundle digest, and every section, and is invariant under
worker count by the engine's determinism contract. Plot-ready CSV files
are emitted alongside, one per figure or table analogue, stable-ordered
so diffs against frozen goldens stay meaningful.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import List, Optional, Sequence

from .config import AnalysisConfig

TOOL_NAME = "tracegrind"
TOOL_VERSION = "0.1.0"

# The closed set of plot-data files cmd_analyze emits (plus report.json).
PLOT_FILES = (
    "fig2_event_types.csv",
    "fig3a_events_per_day.csv",
    "fig3b_tiers_per_day.csv",
    "table1_tiers.csv",
    "table2_max_per_machine.csv",
    "table3_vertical_scaling.csv",
    "table4_job_sizes.csv",
    "table5_final_states.csv",
    "fig4_state_means.csv",
    "fig5_requests_usage.csv",
    "fig6_machines.csv",
    "fig7_util_per_day.csv",
    "fig8_cdf.csv",
)

REPORT_FILE = "report.json"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def report_digest(sections: dict, config: AnalysisConfig, bundle_digest: Optional[str]) -> str:
    payload = json.dumps(
        {
            "bundle_digest": bundle_digest,
            "config": config.to_dict(),
            "sections": sections,
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def _data_quality(sections: dict, provenance: dict) -> dict:
    lifecycle = sections.get("lifecycle", {})
    histogram = lifecycle.get("duration_histogram", {})
    heterogeneity = sections.get("heterogeneity", {})
    resources = sections.get("resources", {})
    cluster = sections.get("cluster", {})
    rejected = {
        table: prov.rejected if hasattr(prov, "rejected") else prov.get("rejected", 0)
        for table, prov in provenance.items()
    }
    return {
        "rejected_lines": rejected,
        "daily_exclusions": {
            "events": heterogeneity.get("events_per_day", {}).get("exclusions", 0),
            "tiers": heterogeneity.get("tiers_per_day", {}).get("exclusions", 0),
        },
        "censored_jobs": histogram.get("censored", 0),
        "malformed_jobs": histogram.get("malformed", 0),
        "unmeasured_jobs": histogram.get("unmeasured", 0),
        "malformed_instances": resources.get("malformed_instances", 0),
        "sentinel_usage_records": resources.get("sentinel_usage_records", 0),
        "boundary_spanning_usage": resources.get("boundary_spanning_usage", 0),
        "usage_without_instance": resources.get("usage_without_instance", 0),
        "zero_capacity_windows": {
            metric: cdf.get("excluded_windows", 0)
            for metric, cdf in cluster.get("utilization_cdf", {}).items()
        },
        "machine_flags": {
            "remove_without_add": cluster.get("remove_without_add", 0),
            "assumed_preexisting": cluster.get("assumed_preexisting", 0),
        },
        "partial_last_day": resources.get("requested_per_day", {}).get(
            "partial_last_day", False
        ),
    }


def build_report(
    sections: dict,
    config: AnalysisConfig,
    bundle_digest: Optional[str] = None,
    provenance: Optional[dict] = None,
    grid_info: Optional[dict] = None,
) -> dict:
    digest = report_digest(sections, config, bundle_digest)
    return {
        "metadata": {
            "tool": TOOL_NAME,
            "version": TOOL_VERSION,
            "bundle_digest": bundle_digest,
            "config": config.to_dict(),
            "grid": grid_info or {},
            "report_digest": digest,
        },
        "sections": sections,
        "data_quality": _data_quality(sections, provenance or {}),
    }


def write_report(report: dict, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(canonical_json(report))


def load_report(path: Path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# --- plot-data CSV emission ------------------------------------------------

def _write_csv(path: Path, header: Sequence[str], rows: List[tuple], sort: bool = True) -> None:
    if sort:
        rows = sorted(rows)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if cell is None else cell for cell in row])


def write_plot_csvs(report: dict, outdir: Path) -> List[Path]:
    """Emit one stable-ordered CSV per in-scope figure or table."""
    outdir = Path(outdir)
    sections = report["sections"]
    het = sections["heterogeneity"]
    lifecycle = sections["lifecycle"]
    resources = sections["resources"]
    cluster = sections["cluster"]
    written = []

    def emit(name, header, rows, sort=True):
        path = outdir / name
        _write_csv(path, header, rows, sort)
        written.append(path)

    rows = [
        (table, name, count)
        for table, key in (
            ("collection_events", "collection_event_types"),
            ("instance_events", "instance_event_types"),
        )
        for name, count in het[key]["counts"].items()
    ]
    emit("fig2_event_types.csv", ("table", "event_type", "count"), rows)

    series = het["events_per_day"]
    emit(
        "fig3a_events_per_day.csv",
        ("day", *series["labels"]),
        [
            (day, *(counts[label] for label in series["labels"]))
            for day, counts in enumerate(series["days"])
        ],
    )

    series = het["tiers_per_day"]
    emit(
        "fig3b_tiers_per_day.csv",
        ("day", *series["labels"]),
        [
            (day, *(counts[label] for label in series["labels"]))
            for day, counts in enumerate(series["days"])
        ],
    )

    tiers = het["tier_distribution"]
    total = tiers["total"]
    emit(
        "table1_tiers.csv",
        ("tier", "jobs", "fraction"),
        [
            (tier, count, count / total if total else 0.0)
            for tier, count in tiers["counts"].items()
        ],
    )

    mpm = het["max_per_machine"]["counts"]
    rows = [("unset", mpm.get("unset", 0))]
    rows += sorted(
        ((value, count) for value, count in mpm.items() if value != "unset"),
        key=lambda r: int(r[0]),
    )
    emit("table2_max_per_machine.csv", ("value", "count"), rows, sort=False)

    vs = het["vertical_scaling"]
    total = vs["total"]
    emit(
        "table3_vertical_scaling.csv",
        ("setting", "jobs", "fraction"),
        [
            (name, count, count / total if total else 0.0)
            for name, count in vs["counts"].items()
        ],
    )

    emit(
        "table4_job_sizes.csv",
        ("bin", "jobs"),
        list(het["job_sizes"]["counts"].items()),
    )

    rows = []
    for tier, entry in lifecycle["final_states_by_tier"].items():
        for state, count in entry["counts"].items():
            rows.append((tier, state, count, entry["fractions"][state]))
    emit("table5_final_states.csv", ("tier", "final_state", "count", "fraction"), rows)

    emit(
        "fig4_state_means.csv",
        ("state", "count", "mean_seconds", "min_seconds", "max_seconds", "total_seconds"),
        [
            (
                state,
                stats["count"],
                stats["mean_seconds"],
                stats["min_seconds"],
                stats["max_seconds"],
                stats["total_seconds"],
            )
            for state, stats in lifecycle["state_durations"].items()
        ],
    )

    requested = resources["requested_per_day"]["days"]
    consumed = resources["consumed_per_day"]["days"]
    emit(
        "fig5_requests_usage.csv",
        ("day", "requested_cpus", "requested_memory", "consumed_cpus", "consumed_memory"),
        [
            (day, req[0], req[1], use[0], use[1])
            for day, (req, use) in enumerate(zip(requested, consumed))
        ],
    )

    emit(
        "fig6_machines.csv",
        ("day", "machines"),
        list(enumerate(cluster["machines_per_day"])),
    )

    capacity = cluster["capacity_per_day"]["days"]
    utilization = cluster["utilization_per_day"]
    emit(
        "fig7_util_per_day.csv",
        (
            "day",
            "capacity_cpus",
            "capacity_memory",
            "usage_cpus",
            "usage_memory",
            "cpu_utilization",
            "memory_utilization",
        ),
        [
            (day, cap[0], cap[1], use[0], use[1], util[0], util[1])
            for day, (cap, use, util) in enumerate(zip(capacity, consumed, utilization))
        ],
    )

    rows = []
    for metric, cdf in cluster["utilization_cdf"].items():
        for x, p in cdf["points"]:
            rows.append((metric, x, p))
    emit("fig8_cdf.csv", ("metric", "x", "probability"), rows)

    return written
