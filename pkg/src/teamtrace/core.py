"""Shared domain types: grid positions, teams, skill tiers, match phases,
player tracks and match records.

Everything in this module is immutable after construction and safe to share
across worker processes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

GRID_SIZE = 128

# Match phase boundaries, half-open: [0, 900) early, [900, 1800) mid,
# [1800, inf) late.
MID_PHASE_START_S = 900
LATE_PHASE_START_S = 1800


class Team(Enum):
    RADIANT = 0
    DIRE = 1

    def __str__(self) -> str:
        return "Radiant" if self is Team.RADIANT else "Dire"

    @classmethod
    def parse(cls, text: str) -> "Team":
        try:
            return {"radiant": cls.RADIANT, "dire": cls.DIRE}[text.strip().lower()]
        except KeyError:
            raise ValueError(f"unknown team name: {text!r}") from None


class SkillTier(Enum):
    NORMAL = "Normal"
    HIGH = "High"
    VERY_HIGH = "VeryHigh"
    PROFESSIONAL = "Professional"

    def __str__(self) -> str:
        return self.value

    @property
    def mmr_range(self) -> tuple[int, float] | None:
        """Half-open MMR interval for rated tiers; None for Professional,
        which is assigned from tournament provenance rather than rating."""
        return _MMR_RANGES[self]

    @classmethod
    def parse(cls, text: str) -> "SkillTier":
        for tier in cls:
            if tier.value.lower() == text.strip().lower():
                return tier
        raise ValueError(f"unknown skill tier: {text!r}")


_MMR_RANGES: dict[SkillTier, tuple[int, float] | None] = {
    SkillTier.NORMAL: (2000, 3000),
    SkillTier.HIGH: (3000, 4000),
    SkillTier.VERY_HIGH: (4000, math.inf),
    SkillTier.PROFESSIONAL: None,
}


class Phase(Enum):
    EARLY = "Early"
    MID = "Mid"
    LATE = "Late"

    def __str__(self) -> str:
        return self.value


def phase_of(t: float) -> Phase:
    """Map a match time in seconds to its phase.

    Boundaries are half-open: t=900 is Mid, t=1800 is Late.
    """
    if t < 0:
        raise ValueError(f"match time must be non-negative, got {t}")
    if t < MID_PHASE_START_S:
        return Phase.EARLY
    if t < LATE_PHASE_START_S:
        return Phase.MID
    return Phase.LATE


def phase_window(phase: Phase) -> tuple[int, float]:
    """Half-open [start, end) second interval covered by a phase."""
    if phase is Phase.EARLY:
        return 0, MID_PHASE_START_S
    if phase is Phase.MID:
        return MID_PHASE_START_S, LATE_PHASE_START_S
    return LATE_PHASE_START_S, math.inf


def tier_of_mmr(mmr: float) -> SkillTier:
    """Classify a matchmaking rating into a rated skill tier.

    Intervals are half-open upward: [2000,3000) Normal, [3000,4000) High,
    [4000,inf) VeryHigh. Professional is never returned; it comes from
    tournament provenance, not from a rating.
    """
    if mmr < 2000:
        raise ValueError(f"MMR {mmr} is below the studied brackets (>= 2000)")
    if mmr < 3000:
        return SkillTier.NORMAL
    if mmr < 4000:
        return SkillTier.HIGH
    return SkillTier.VERY_HIGH


@dataclass(frozen=True)
class GridCell:
    """One cell of the 128x128 map grid. Origin is the south-west corner;
    y grows northward."""

    x: int
    y: int

    def __post_init__(self):
        if not (0 <= self.x < GRID_SIZE and 0 <= self.y < GRID_SIZE):
            raise ValueError(f"cell ({self.x},{self.y}) outside [0,{GRID_SIZE - 1}]")


@dataclass(frozen=True)
class SubCellOffset:
    """Fractional within-cell position, in cell units. Decoded and carried
    through, but no measure consumes it."""

    vx: float
    vy: float

    def __post_init__(self):
        if not (math.isfinite(self.vx) and math.isfinite(self.vy)):
            raise ValueError("sub-cell offsets must be finite")


@dataclass(frozen=True)
class PlayerTrack:
    """One player's positions sampled at exactly 1 Hz.

    ``cells[t]`` is the player's grid cell at second t, for t = 0..len-1.
    """

    player_id: int
    team: Team
    cells: tuple[GridCell, ...]

    def __post_init__(self):
        if not self.cells:
            raise ValueError("a track needs at least one sample")

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def duration_s(self) -> int:
        """Timestamp of the last sample."""
        return len(self.cells) - 1

    @property
    def samples(self) -> tuple[tuple[int, GridCell], ...]:
        """(t, cell) pairs, t starting at 0 and increasing by 1."""
        return tuple(enumerate(self.cells))


@dataclass(frozen=True)
class MatchRecord:
    """A fully decoded match: metadata plus the ten player tracks."""

    match_id: int
    tier: SkillTier
    winner: Team
    duration_s: int
    tracks: tuple[PlayerTrack, ...] = field(repr=False)

    def __post_init__(self):
        if self.duration_s < 0:
            raise ValueError("duration must be non-negative")
        if len(self.tracks) != 10:
            raise ValueError(f"a match has 10 tracks, got {len(self.tracks)}")
        for side in Team:
            n = sum(1 for tr in self.tracks if tr.team is side)
            if n != 5:
                raise ValueError(f"expected 5 tracks for {side}, got {n}")
        want = self.duration_s + 1
        for tr in self.tracks:
            if len(tr) != want:
                raise ValueError(
                    f"track {tr.player_id} has {len(tr)} samples, expected {want}"
                )

    def team_tracks(self, team: Team) -> tuple[PlayerTrack, ...]:
        return tuple(tr for tr in self.tracks if tr.team is team)
