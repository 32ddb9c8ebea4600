"""Seeded synthetic match generator.

Plants known behavior so the whole pipeline can be verified end to end:
each team follows one waypoint regime, re-anchoring all five players in a
fresh zone at Poisson-like switch times (a 5 s dwell floor keeps every
planted stay countable), with player anchors dispersed around the team's
reference point by ``spread_sigma`` cells. Measured team distance scales
with the dispersion and the measured zone-change rate tracks the switch
rate, so regimes emulating skill tiers can be ordered and tested. No
fidelity to real play is claimed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np

from .core import MatchRecord, SkillTier, Team
from .tickstream import (
    PLAYER_COUNT,
    PlayerSlot,
    StreamHeader,
    UPDATE_DTYPE,
    _pack_frames,
    tick_for_second,
    tracks_from_stream,
    tracks_to_objects,
)
from .zonemap import _LABEL_INDEX, ZoneLabel, ZoneMap

# Stays shorter than the dwell filter's threshold would be dropped by the
# measures, so planted switch gaps never go below it.
MIN_SWITCH_GAP_S = 5.0

_TARGET_ZONES = (
    ZoneLabel.TOP_LANE,
    ZoneLabel.MIDDLE_LANE,
    ZoneLabel.BOTTOM_LANE,
    ZoneLabel.JUNGLE,
)

METADATA_COLUMNS = ("match_id", "tier", "winner", "duration_s")


@dataclass(frozen=True)
class RegimeParams:
    """One team's planted movement regime."""

    spread_sigma: float  # target dispersion around the team anchor, cells
    switch_rate: float   # expected zone changes per player per minute
    match_len_s: int
    seed: int = 0

    def __post_init__(self):
        if self.spread_sigma < 0:
            raise ValueError("spread_sigma cannot be negative")
        if not 0 < self.switch_rate < 60.0 / MIN_SWITCH_GAP_S:
            raise ValueError(
                f"switch_rate must be in (0, {60.0 / MIN_SWITCH_GAP_S}) per minute"
            )
        if self.match_len_s < 1:
            raise ValueError("match_len_s must be positive")


@dataclass(frozen=True)
class MatchMeta:
    match_id: int
    tier: SkillTier
    winner: Team
    duration_s: int


_interior_cache: dict[int, tuple] = {}

# Anchor candidates per zone are capped so the per-event nearest-cell
# projection stays cheap; the stride keeps them spread over the zone.
_MAX_POOL = 256


def _zone_interiors(zmap: ZoneMap, radius: int = 2) -> dict[ZoneLabel, np.ndarray]:
    """(n, 2) interior cells per zone: cells whose full (2r+1)^2
    neighborhood shares their label, so small jitter cannot escape."""
    key = id(zmap.codes)
    hit = _interior_cache.get(key)
    if hit is not None and hit[0] is zmap.codes:
        return hit[1]

    codes = zmap.codes
    padded = np.pad(codes, radius, constant_values=255)
    same = np.ones_like(codes, dtype=bool)
    size = codes.shape[0]
    for dx in range(2 * radius + 1):
        for dy in range(2 * radius + 1):
            same &= padded[dx : dx + size, dy : dy + size] == codes
    interiors = {}
    for label in ZoneLabel:
        mask = same & (codes == np.uint8(_LABEL_INDEX[label]))
        xs, ys = np.nonzero(mask)
        pool = np.column_stack((xs, ys)).astype(np.float64)
        if len(pool) > _MAX_POOL:
            stride = -(-len(pool) // _MAX_POOL)
            pool = pool[::stride]
        interiors[label] = pool

    if len(_interior_cache) > 4:
        _interior_cache.clear()
    _interior_cache[key] = (zmap.codes, interiors)
    return interiors


def _switch_times(rng: np.random.Generator, rate_per_min: float, match_len_s: int) -> list[int]:
    """Seconds at which the team re-anchors; gaps are the dwell floor plus
    an exponential tail so the long-run rate matches rate_per_min."""
    mean_gap = 60.0 / rate_per_min
    t = 0.0
    out = []
    while True:
        t += MIN_SWITCH_GAP_S + rng.exponential(mean_gap - MIN_SWITCH_GAP_S)
        if t > match_len_s:
            return out
        out.append(int(np.ceil(t)))


def _team_positions(
    rng: np.random.Generator,
    params: RegimeParams,
    interiors: dict[ZoneLabel, np.ndarray],
    base: ZoneLabel,
) -> tuple[np.ndarray, np.ndarray]:
    """(5, T+1, 2) integer cells and float32 sub-cell offsets for one team."""
    n = 5
    length = params.match_len_s + 1
    for label in (base,) + _TARGET_ZONES:
        if len(interiors[label]) == 0:
            raise ValueError(f"zone map has no interior cells for {label}")

    event_secs = [0] + _switch_times(rng, params.switch_rate, params.match_len_s)
    n_events = len(event_secs)

    # zone per event: spawn in the base, then always move somewhere new
    zones = [base]
    for _ in range(1, n_events):
        choices = [z for z in _TARGET_ZONES if z is not zones[-1]]
        zones.append(choices[rng.integers(len(choices))])

    refs = np.empty((n_events, 2))
    for i, zone in enumerate(zones):
        pool = interiors[zone]
        refs[i] = pool[rng.integers(len(pool))]

    # each player anchors to the interior cell nearest a Gaussian
    # displacement of the event's reference cell; batched per zone
    proposals = refs[:, None, :] + rng.normal(0.0, params.spread_sigma, (n_events, n, 2))
    anchors = np.empty((n_events, n, 2))
    for zone in set(zones):
        pool = interiors[zone]
        idx = [i for i, z in enumerate(zones) if z is zone]
        flat = proposals[idx].reshape(-1, 2)
        # argmin of squared distance; the |proposal|^2 term is constant per row
        scores = (pool * pool).sum(axis=1)[None, :] - 2.0 * (flat @ pool.T)
        nearest = scores.argmin(axis=1).reshape(len(idx), n)
        anchors[idx] = pool[nearest]

    spans = np.diff(np.asarray(event_secs + [length]))
    timeline = np.repeat(anchors, spans, axis=0).transpose(1, 0, 2)

    jitter_sigma = min(0.7, params.spread_sigma / 3.0)
    if jitter_sigma > 0:
        # redrawn every other second: halves the update traffic without
        # changing dispersion
        half = (length + 1) // 2
        jitter = rng.normal(0.0, jitter_sigma, size=(n, half, 2))
        jitter = np.repeat(jitter, 2, axis=1)[:, :length, :]
        continuous = timeline + jitter
    else:
        continuous = timeline.astype(np.float64)

    cells = np.clip(np.rint(continuous), 0, 127)
    offsets = (continuous - cells).astype(np.float32)
    return cells.astype(np.uint8), offsets


def generate_match(
    params_radiant: RegimeParams,
    params_dire: RegimeParams,
    zone_map: ZoneMap,
    seed: int,
    match_id: int | None = None,
    tier: SkillTier = SkillTier.NORMAL,
    winner: Team | None = None,
    tick_interval_ms: int = 33,
) -> tuple[bytes, MatchMeta]:
    """Produce one DTL2 stream plus its metadata.

    Fully deterministic: the same (seed, params) always yields identical
    bytes. Both teams must share the match length.
    """
    if params_radiant.match_len_s != params_dire.match_len_s:
        raise ValueError("both teams must use the same match length")
    if not 1 <= tick_interval_ms <= 999:
        raise ValueError("tick_interval_ms must be in [1, 999]")
    duration = params_radiant.match_len_s

    root = np.random.SeedSequence(
        entropy=(abs(int(seed)), params_radiant.seed, params_dire.seed)
    )
    meta_ss, radiant_ss, dire_ss = root.spawn(3)
    meta_rng = np.random.default_rng(meta_ss)
    if match_id is None:
        match_id = int(meta_rng.integers(1, 1 << 48))
    if winner is None:
        winner = Team.RADIANT if meta_rng.integers(2) == 0 else Team.DIRE

    interiors = _zone_interiors(zone_map)
    rad_cells, rad_offs = _team_positions(
        np.random.default_rng(radiant_ss), params_radiant, interiors, ZoneLabel.BASE_RADIANT
    )
    dire_cells, dire_offs = _team_positions(
        np.random.default_rng(dire_ss), params_dire, interiors, ZoneLabel.BASE_DIRE
    )
    cells = np.concatenate((rad_cells, dire_cells), axis=0)
    offs = np.concatenate((rad_offs, dire_offs), axis=0)

    header = StreamHeader(
        match_id=match_id,
        players=tuple(
            PlayerSlot(i, Team.RADIANT if i < 5 else Team.DIRE, 100 + i)
            for i in range(PLAYER_COUNT)
        ),
        tick_interval_ms=tick_interval_ms,
    )

    # sparse frames: an entity appears only in the seconds its cell moved
    moved = (cells[:, 1:] != cells[:, :-1]).any(axis=-1)
    mask = np.concatenate((np.ones((PLAYER_COUNT, 1), dtype=bool), moved), axis=1)
    secs_u, ents_u = np.nonzero(mask.T)  # second-major, entity-sorted

    updates = np.empty(secs_u.size, dtype=UPDATE_DTYPE)
    updates["entity"] = ents_u
    updates["x"] = cells[ents_u, secs_u, 0]
    updates["y"] = cells[ents_u, secs_u, 1]
    updates["vx"] = offs[ents_u, secs_u, 0]
    updates["vy"] = offs[ents_u, secs_u, 1]

    frame_secs = np.unique(secs_u)
    counts = np.bincount(secs_u, minlength=duration + 1)[frame_secs]
    ticks = tick_for_second(frame_secs.astype(np.int64), tick_interval_ms)

    stream = _pack_frames(header, ticks, counts, updates)
    return stream, MatchMeta(match_id, tier, winner, duration)


def decode_to_record(stream: bytes, meta: MatchMeta) -> MatchRecord:
    """Decode a generated stream into a MatchRecord using its metadata."""
    header, cells = tracks_from_stream(stream, meta.duration_s)
    tracks = tracks_to_objects(header, cells)
    return MatchRecord(meta.match_id, meta.tier, meta.winner, meta.duration_s, tracks)


def write_metadata_csv(out: TextIO, metas: Iterable[MatchMeta]) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(METADATA_COLUMNS)
    for m in metas:
        w.writerow((m.match_id, str(m.tier), str(m.winner), m.duration_s))


def read_metadata_csv(inp: TextIO) -> dict[int, MatchMeta]:
    reader = csv.reader(inp)
    head = next(reader, None)
    if head is None or tuple(head) != METADATA_COLUMNS:
        raise ValueError(f"bad metadata header: {head}")
    out: dict[int, MatchMeta] = {}
    for mid, tier, winner, dur in reader:
        meta = MatchMeta(int(mid), SkillTier.parse(tier), Team.parse(winner), int(dur))
        out[meta.match_id] = meta
    return out
