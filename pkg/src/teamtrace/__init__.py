"""Spatio-temporal team behavior analytics for MOBA-style match telemetry.

Decodes DTL2 tick streams into 1 Hz player tracks, classifies positions
into terrain zones, and computes dwell-filtered zone-change rates,
intra-team distance series and permutation-distribution time-series
clustering, with one-way ANOVA and silhouette diagnostics plus a seeded
synthetic match generator for end-to-end verification.
"""

__version__ = "0.1.0"

from .core import (
    GridCell,
    MatchRecord,
    Phase,
    PlayerTrack,
    SkillTier,
    SubCellOffset,
    Team,
    phase_of,
    tier_of_mmr,
)
from .zonemap import ZoneLabel, ZoneMap, load_zone_map, zone_of

__all__ = [
    "GridCell",
    "MatchRecord",
    "Phase",
    "PlayerTrack",
    "SkillTier",
    "SubCellOffset",
    "Team",
    "ZoneLabel",
    "ZoneMap",
    "load_zone_map",
    "phase_of",
    "tier_of_mmr",
    "zone_of",
    "__version__",
]
