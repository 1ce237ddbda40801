"""Analysis configuration: one JSON document drives every module.

Defaults reproduce the standard characterization settings (five priority
tiers, running-time job durations, the four duration bands, 5-minute
windows). The TRACEGRIND_CONFIG environment variable supplies a config
path when the CLI flag is absent.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

from .model import TierBoundaries

CONFIG_ENV_VAR = "TRACEGRIND_CONFIG"

DURATION_FROM_SCHEDULE = "schedule_to_terminal"
DURATION_FROM_SUBMIT = "submit_to_terminal"

DEFAULT_DURATION_BAND_EDGES = (100, 1000, 86_400)


@dataclass(frozen=True)
class AnalysisConfig:
    tier_boundaries: TierBoundaries = field(default_factory=TierBoundaries)
    duration_mode: str = DURATION_FROM_SCHEDULE
    # Ascending band edges in seconds; k edges give k+1 half-open bands.
    duration_band_edges: Tuple[int, ...] = DEFAULT_DURATION_BAND_EDGES
    window_seconds: int = 300
    include_alloc_instances: bool = False
    partition_count: int = 16

    def __post_init__(self) -> None:
        if self.duration_mode not in (DURATION_FROM_SCHEDULE, DURATION_FROM_SUBMIT):
            raise ValueError(f"unknown duration mode: {self.duration_mode}")
        edges = self.duration_band_edges
        if not edges or list(edges) != sorted(set(edges)) or edges[0] <= 0:
            raise ValueError(f"band edges must be positive and ascending: {edges}")
        if self.window_seconds <= 0 or 86_400 % self.window_seconds != 0:
            raise ValueError("window length must evenly divide one day")
        if self.partition_count < 1:
            raise ValueError("partition_count must be >= 1")

    @property
    def windows_per_day(self) -> int:
        return 86_400 // self.window_seconds

    def to_dict(self) -> dict:
        b = self.tier_boundaries
        return {
            "tier_boundaries": [b.free_max, b.best_effort_max, b.mid_max, b.production_max],
            "duration_mode": self.duration_mode,
            "duration_band_edges": list(self.duration_band_edges),
            "window_seconds": self.window_seconds,
            "include_alloc_instances": self.include_alloc_instances,
            "partition_count": self.partition_count,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AnalysisConfig":
        known = {
            "tier_boundaries",
            "duration_mode",
            "duration_band_edges",
            "window_seconds",
            "include_alloc_instances",
            "partition_count",
        }
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict = {}
        if "tier_boundaries" in data:
            cuts = data["tier_boundaries"]
            if not isinstance(cuts, Sequence) or len(cuts) != 4:
                raise ValueError("tier_boundaries must be four ascending integers")
            kwargs["tier_boundaries"] = TierBoundaries(*[int(c) for c in cuts])
        if "duration_mode" in data:
            kwargs["duration_mode"] = data["duration_mode"]
        if "duration_band_edges" in data:
            kwargs["duration_band_edges"] = tuple(int(e) for e in data["duration_band_edges"])
        if "window_seconds" in data:
            kwargs["window_seconds"] = int(data["window_seconds"])
        if "include_alloc_instances" in data:
            kwargs["include_alloc_instances"] = bool(data["include_alloc_instances"])
        if "partition_count" in data:
            kwargs["partition_count"] = int(data["partition_count"])
        return cls(**kwargs)


def load_config(path: Optional[Path] = None) -> AnalysisConfig:
    """Load config from a file, the env fallback, or defaults."""
    if path is None:
        env_path = os.environ.get(CONFIG_ENV_VAR)
        if env_path:
            path = Path(env_path)
    if path is None:
        return AnalysisConfig()
    with open(path, "r", encoding="utf-8") as fh:
        return AnalysisConfig.from_dict(json.load(fh))
