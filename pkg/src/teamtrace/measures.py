"""Behavioral measures over decoded matches: zone sequences with dwell
filtering and change rates, intra-team distance series, moving averages
and cross-match aggregation by tier / outcome / phase.

All functions are pure; matches can be processed concurrently.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Sequence, TextIO

import numpy as np

from .core import GRID_SIZE, MatchRecord, Phase, PlayerTrack, SkillTier, Team, phase_window
from .zonemap import _LABEL_INDEX, _LABELS, ZoneLabel, ZoneMap

DEFAULT_MIN_DWELL_S = 5

ZONE_CHANGE_COLUMNS = ("match_id", "player_id", "team", "tier", "win", "changes", "rate_per_min")
DISTANCE_COLUMNS = ("match_id", "team", "t", "d")
AGGREGATE_COLUMNS = ("tier", "outcome", "phase", "t", "mean_d", "n_matches")


@dataclass(frozen=True)
class ZoneVisit:
    """A maximal stay in one zone that survived the dwell filter."""

    zone: ZoneLabel
    start_s: int
    dwell_s: int


@dataclass(frozen=True)
class ZoneChangeStats:
    player_id: int
    changes: int
    duration_s: int
    rate_per_min: float


@dataclass(frozen=True)
class DistanceSeries:
    """Per-second average pairwise intra-team distance, grid-cell units."""

    match_id: int
    team: Team
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1 or v.size == 0:
            raise ValueError("distance series must be a non-empty 1-D array")
        if not np.isfinite(v).all() or (v < 0).any():
            raise ValueError("distances must be finite and non-negative")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def duration_s(self) -> int:
        return len(self.values) - 1


@dataclass(frozen=True)
class LabeledSeries:
    """A distance series tagged with the labels aggregation facets on."""

    series: DistanceSeries
    tier: SkillTier
    won: bool


def zone_codes(cells: np.ndarray, zmap: ZoneMap) -> np.ndarray:
    """Zone label codes for an (..., 2) array of cell coordinates."""
    cells = np.asarray(cells)
    return zmap.codes[cells[..., 0], cells[..., 1]]


def zone_sequence(track: PlayerTrack, zmap: ZoneMap) -> list[ZoneLabel]:
    """One zone label per second, same length as the track."""
    xs = np.fromiter((c.x for c in track.cells), dtype=np.intp, count=len(track))
    ys = np.fromiter((c.y for c in track.cells), dtype=np.intp, count=len(track))
    return [_LABELS[c] for c in zmap.codes[xs, ys].tolist()]


def _runs(codes: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run-length encode: (values, starts, lengths)."""
    breaks = np.flatnonzero(np.diff(codes)) + 1
    starts = np.concatenate(([0], breaks))
    lengths = np.diff(np.concatenate((starts, [codes.size])))
    return codes[starts], starts, lengths


def dwell_filter(
    zones: Sequence[ZoneLabel] | np.ndarray, min_dwell_s: int = DEFAULT_MIN_DWELL_S
) -> list[ZoneVisit]:
    """Run-length encode a zone sequence and drop runs shorter than
    ``min_dwell_s`` seconds.

    A dropped run's time is discarded, not reassigned; surviving adjacent
    runs of the same zone merge into one visit (so a momentary border
    crossing neither counts as a change nor splits the stay).
    """
    if len(zones) == 0:
        raise ValueError("empty zone sequence")
    if min_dwell_s < 1:
        raise ValueError("min_dwell_s must be at least 1")
    if isinstance(zones, np.ndarray):
        codes = zones.astype(np.int64, copy=False)
    else:
        codes = np.fromiter(
            (_LABEL_INDEX[z] for z in zones), dtype=np.int64, count=len(zones)
        )
    labels = _LABELS

    values, starts, lengths = _runs(codes)
    visits: list[ZoneVisit] = []
    for val, start, length in zip(values.tolist(), starts.tolist(), lengths.tolist()):
        if length < min_dwell_s:
            continue
        if visits and visits[-1].zone is labels[val]:
            prev = visits[-1]
            visits[-1] = ZoneVisit(prev.zone, prev.start_s, prev.dwell_s + length)
        else:
            visits.append(ZoneVisit(labels[val], start, length))
    return visits


def change_count(visits: Sequence[ZoneVisit]) -> int:
    return max(0, len(visits) - 1)


def zone_change_stats(
    track: PlayerTrack, zmap: ZoneMap, min_dwell_s: int = DEFAULT_MIN_DWELL_S
) -> ZoneChangeStats:
    """Dwell-filtered zone changes for one player, normalized per minute.

    The rate denominator is the observed time: one second per 1 Hz sample.
    """
    xs = np.fromiter((c.x for c in track.cells), dtype=np.intp, count=len(track))
    ys = np.fromiter((c.y for c in track.cells), dtype=np.intp, count=len(track))
    codes = zmap.codes[xs, ys].astype(np.int64)
    return stats_from_codes(track.player_id, codes, min_dwell_s)


def stats_from_codes(
    player_id: int, codes: np.ndarray, min_dwell_s: int = DEFAULT_MIN_DWELL_S
) -> ZoneChangeStats:
    duration_s = int(codes.size)
    if duration_s == 0:
        raise ValueError("zero-duration match")
    visits = dwell_filter(codes, min_dwell_s)
    changes = change_count(visits)
    return ZoneChangeStats(player_id, changes, duration_s, changes * 60.0 / duration_s)


def team_distance(positions) -> float:
    """Average Euclidean distance over all pairs of teammate positions.

    ``positions`` is a sequence of GridCell or an (n, 2) coordinate array,
    n >= 2. Upper-triangle sum normalized by n(n-1)/2.
    """
    pts = _as_points(positions)
    n = pts.shape[0]
    if n < 2:
        raise ValueError("team distance needs at least 2 positions")
    diff = pts[:, None, :] - pts[None, :, :]
    dists = np.sqrt((diff * diff).sum(axis=-1))
    iu = np.triu_indices(n, k=1)
    return float(dists[iu].mean())


def _as_points(positions) -> np.ndarray:
    if isinstance(positions, np.ndarray):
        return positions.astype(np.float64, copy=False)
    first = positions[0] if len(positions) else None
    if hasattr(first, "x"):
        return np.array([(p.x, p.y) for p in positions], dtype=np.float64)
    return np.asarray(positions, dtype=np.float64)


def distance_values(cells: np.ndarray) -> np.ndarray:
    """Per-second team distance for an (n, T, 2) cell array."""
    pts = cells.astype(np.float64)
    n = pts.shape[0]
    total = np.zeros(pts.shape[1])
    for i in range(n - 1):
        for j in range(i + 1, n):
            d = pts[i] - pts[j]
            total += np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1])
    return total / (n * (n - 1) / 2)


def distance_series(match: MatchRecord, team: Team) -> DistanceSeries:
    """Average pairwise distance of one team's five players, evaluated
    at every second of the match."""
    tracks = match.team_tracks(team)
    cells = np.array(
        [[(c.x, c.y) for c in tr.cells] for tr in tracks], dtype=np.float64
    )
    return DistanceSeries(match.match_id, team, distance_values(cells))


def moving_average(series, window_s: int = 1) -> np.ndarray:
    """Trailing mean over the last ``window_s`` samples (fewer at the
    start). Window 1 is the identity at 1 Hz."""
    if window_s < 1:
        raise ValueError("window must be at least 1 second")
    v = np.asarray(series, dtype=np.float64)
    c = np.concatenate(([0.0], np.cumsum(v)))
    t = np.arange(v.size)
    lo = np.maximum(t - window_s + 1, 0)
    return (c[t + 1] - c[lo]) / (t - lo + 1)


def aggregate_by_category(
    labeled: Sequence[LabeledSeries], tier: SkillTier, won: bool, phase: Phase
) -> list[tuple[int, float, int]]:
    """Per-second mean distance for one (tier, outcome) category within a
    phase window.

    Returns (t, mean_d, n_matches) rows; at each second only the series
    still running contribute, so short matches drop out of the tail.
    """
    sel = [ls.series.values for ls in labeled if ls.tier is tier and ls.won == won]
    if not sel:
        raise ValueError(f"empty category: tier={tier}, won={won}")
    start, end = phase_window(phase)
    longest = max(len(v) for v in sel)
    end = min(end, longest)
    if end <= start:
        return []
    width = int(end - start)
    stack = np.full((len(sel), width), np.nan)
    for i, v in enumerate(sel):
        if len(v) > start:
            chunk = v[start:int(end)]
            stack[i, : len(chunk)] = chunk
    counts = (~np.isnan(stack)).sum(axis=0)
    sums = np.nansum(stack, axis=0)
    rows = []
    for off in range(width):
        n = int(counts[off])
        if n:
            rows.append((int(start) + off, float(sums[off] / n), n))
    return rows


def visit_counts(tracks: Iterable[PlayerTrack]) -> np.ndarray:
    """128x128 grid of player-seconds spent in each cell."""
    grid = np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.int64)
    for track in tracks:
        xs = np.fromiter((c.x for c in track.cells), dtype=np.intp, count=len(track))
        ys = np.fromiter((c.y for c in track.cells), dtype=np.intp, count=len(track))
        np.add.at(grid, (xs, ys), 1)
    return grid


def write_zone_changes_csv(out: TextIO, rows: Iterable[tuple]) -> None:
    """Rows: (match_id, player_id, team, tier, win: bool, changes, rate)."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(ZONE_CHANGE_COLUMNS)
    for match_id, player_id, team, tier, win, changes, rate in rows:
        w.writerow((match_id, player_id, str(team), str(tier), int(win), changes, repr(rate)))


def write_distance_csv(out: TextIO, series_set: Iterable[DistanceSeries]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(DISTANCE_COLUMNS)
    for s in series_set:
        team = str(s.team)
        for t, d in enumerate(s.values.tolist()):
            w.writerow((s.match_id, team, t, repr(d)))


def write_aggregate_csv(out: TextIO, rows: Iterable[tuple]) -> None:
    """Rows: (tier, outcome: bool, phase, t, mean_d, n_matches)."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(AGGREGATE_COLUMNS)
    for tier, won, phase, t, mean_d, n in rows:
        w.writerow((str(tier), "win" if won else "loss", str(phase), t, repr(mean_d), n))
