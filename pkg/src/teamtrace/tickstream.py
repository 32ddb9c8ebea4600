"""DTL2 binary tick-stream codec, time standardization and 1 Hz resampling.

Wire format (all integers little-endian, floats IEEE 754 binary32)
------------------------------------------------------------------
Header:
    4 bytes   magic = "DTL2"
    uint16    version (= 1)
    uint64    match_id
    uint16    tick_interval_ms (33 unless stated otherwise)
    uint8     player_count (= 10)
    10 x player slot:
        uint8     entity_id (unique)
        uint8     team (0 = Radiant, 1 = Dire)
        uint32    player_id

Frames, repeated until end of stream:
    uint32    tick (strictly increasing across frames)
    uint16    update_count
    update_count x update:
        uint8     entity_id (declared in the header, unique within the frame)
        uint8     cell_x (0..127)
        uint8     cell_y (0..127)
        float32   vx  (sub-cell offset, cell units)
        float32   vy

Updates are sparse: a frame carries only the entities whose position
changed. The first frame must be a keyframe at tick 0 listing all ten
entities, so every later position is reachable by carry-forward. One tick
spans ``tick_interval_ms`` of wall time; analysis runs on a 1 Hz grid, so
ticks are standardized to the nearest second (half-up) and, within one
second, the latest tick wins.

Sub-cell offsets are stored as binary32 and are rounded to that grid on
write; on the format's value domain decode(encode(x)) == x and re-encoding
a decoded stream reproduces the input bytes exactly.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from math import isfinite
from typing import Iterable, NamedTuple, TextIO

import numpy as np

from .core import GRID_SIZE, GridCell, PlayerTrack, Team

MAGIC = b"DTL2"
FORMAT_VERSION = 1
DEFAULT_TICK_INTERVAL_MS = 33
PLAYER_COUNT = 10

_HEADER = struct.Struct("<4sHQHB")
_SLOT = struct.Struct("<BBI")
_FRAME_HEAD = struct.Struct("<IH")
_UPDATE = struct.Struct("<BBBff")

HEADER_SIZE = _HEADER.size + PLAYER_COUNT * _SLOT.size

# numpy view of one update; matches _UPDATE byte for byte
UPDATE_DTYPE = np.dtype(
    [("entity", "u1"), ("x", "u1"), ("y", "u1"), ("vx", "<f4"), ("vy", "<f4")]
)

TRAJECTORY_COLUMNS = ("match_id", "team", "player_id", "t", "x", "y")


class StreamFormatError(ValueError):
    """Raised for any malformed or unencodable stream. ``offset`` is the
    byte position of the problem when it is known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class PlayerSlot(NamedTuple):
    entity_id: int
    team: Team
    player_id: int


@dataclass(frozen=True)
class StreamHeader:
    match_id: int
    players: tuple[PlayerSlot, ...]
    tick_interval_ms: int = DEFAULT_TICK_INTERVAL_MS
    version: int = FORMAT_VERSION

    def entity_ids(self) -> frozenset[int]:
        return frozenset(p.entity_id for p in self.players)


class FrameUpdate(NamedTuple):
    entity_id: int
    cell_x: int
    cell_y: int
    vx: float
    vy: float


@dataclass(frozen=True)
class Frame:
    tick: int
    updates: tuple[FrameUpdate, ...]


def tick_to_second(tick: int, tick_interval_ms: int = DEFAULT_TICK_INTERVAL_MS) -> int:
    """Standardize a tick to the nearest second, rounding halves up."""
    if tick < 0:
        raise ValueError("tick must be non-negative")
    return (tick * tick_interval_ms + 500) // 1000


def tick_for_second(second, tick_interval_ms: int = DEFAULT_TICK_INTERVAL_MS):
    """Tick closest to a whole second; tick_to_second maps it back for any
    interval up to 999 ms. Accepts scalars or integer arrays."""
    return (1000 * second + tick_interval_ms // 2) // tick_interval_ms


def _check_header(header: StreamHeader) -> None:
    if header.version != FORMAT_VERSION:
        raise StreamFormatError(f"unsupported version {header.version}")
    if not 0 <= header.match_id < 1 << 64:
        raise StreamFormatError("match_id out of uint64 range")
    if not 1 <= header.tick_interval_ms < 1 << 16:
        raise StreamFormatError("tick_interval_ms out of range")
    if len(header.players) != PLAYER_COUNT:
        raise StreamFormatError(
            f"expected {PLAYER_COUNT} player slots, got {len(header.players)}"
        )
    seen = set()
    for slot in header.players:
        if not 0 <= slot.entity_id < 256:
            raise StreamFormatError(f"entity_id {slot.entity_id} out of uint8 range")
        if slot.entity_id in seen:
            raise StreamFormatError(f"duplicate entity_id {slot.entity_id} in header")
        seen.add(slot.entity_id)
        if not isinstance(slot.team, Team):
            raise StreamFormatError("player slot team must be a Team")
        if not 0 <= slot.player_id < 1 << 32:
            raise StreamFormatError(f"player_id {slot.player_id} out of uint32 range")


def _pack_header(header: StreamHeader) -> bytes:
    parts = [
        _HEADER.pack(
            MAGIC,
            header.version,
            header.match_id,
            header.tick_interval_ms,
            len(header.players),
        )
    ]
    parts.extend(
        _SLOT.pack(p.entity_id, p.team.value, p.player_id) for p in header.players
    )
    return b"".join(parts)


def encode(header: StreamHeader, frames: Iterable[Frame]) -> bytes:
    """Serialize a header and frame sequence to DTL2 bytes.

    The first frame must be a tick-0 keyframe carrying all ten entities;
    ticks must strictly increase, entities must be declared and unique per
    frame, and cells must fit the 128x128 grid.
    """
    _check_header(header)
    frames = list(frames)
    if not frames:
        raise StreamFormatError("a stream needs at least the tick-0 keyframe")
    known = header.entity_ids()

    chunks = [_pack_header(header)]
    prev_tick = -1
    for idx, frame in enumerate(frames):
        if not 0 <= frame.tick < 1 << 32:
            raise StreamFormatError(f"frame {idx}: tick out of uint32 range")
        if frame.tick <= prev_tick:
            raise StreamFormatError(
                f"frame {idx}: tick {frame.tick} not greater than {prev_tick}"
            )
        prev_tick = frame.tick
        if len(frame.updates) >= 1 << 16:
            raise StreamFormatError(f"frame {idx}: too many updates")
        chunks.append(_FRAME_HEAD.pack(frame.tick, len(frame.updates)))
        in_frame = set()
        for u in frame.updates:
            if u.entity_id not in known:
                raise StreamFormatError(
                    f"frame {idx}: entity {u.entity_id} not declared in header"
                )
            if u.entity_id in in_frame:
                raise StreamFormatError(
                    f"frame {idx}: duplicate entity {u.entity_id}"
                )
            in_frame.add(u.entity_id)
            if not (0 <= u.cell_x < GRID_SIZE and 0 <= u.cell_y < GRID_SIZE):
                raise StreamFormatError(
                    f"frame {idx}: cell ({u.cell_x},{u.cell_y}) out of range"
                )
            if not (isfinite(u.vx) and isfinite(u.vy)):
                raise StreamFormatError(f"frame {idx}: non-finite sub-cell offset")
            chunks.append(_UPDATE.pack(*u))

    key = frames[0]
    if key.tick != 0 or {u.entity_id for u in key.updates} != known:
        raise StreamFormatError(
            "first frame must be a tick-0 keyframe covering all entities"
        )
    return b"".join(chunks)


def _pack_frames(
    header: StreamHeader,
    ticks: np.ndarray,
    counts: np.ndarray,
    updates: np.ndarray,
) -> bytes:
    """Array-based serializer for trusted producers (no per-update checks).

    ``updates`` is an UPDATE_DTYPE array holding every frame's updates
    back to back; ``counts[i]`` updates belong to the frame at ``ticks[i]``.
    Produces bytes identical to :func:`encode` on equivalent input.
    """
    _check_header(header)
    chunks = [_pack_header(header)]
    raw = updates.tobytes()
    pos = 0
    pack = _FRAME_HEAD.pack
    unit = UPDATE_DTYPE.itemsize
    for tick, cnt in zip(ticks.tolist(), counts.tolist()):
        chunks.append(pack(tick, cnt))
        end = pos + cnt * unit
        chunks.append(raw[pos:end])
        pos = end
    return b"".join(chunks)


def _scan(data: bytes):
    """Parse and validate stream structure.

    Returns (header, frame_ticks, frame_counts, update_offsets) where
    ``update_offsets[i]`` is the byte offset of frame i's update block.
    """
    if len(data) < _HEADER.size:
        raise StreamFormatError("truncated header", offset=len(data))
    magic, version, match_id, interval, player_count = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise StreamFormatError(f"bad magic {magic!r}", offset=0)
    if version != FORMAT_VERSION:
        raise StreamFormatError(f"unsupported version {version}", offset=4)
    if player_count != PLAYER_COUNT:
        raise StreamFormatError(f"player_count {player_count} != {PLAYER_COUNT}", offset=16)
    if interval < 1:
        raise StreamFormatError("tick_interval_ms must be positive", offset=14)
    if len(data) < HEADER_SIZE:
        raise StreamFormatError("truncated player table", offset=len(data))

    slots = []
    seen = set()
    off = _HEADER.size
    for _ in range(player_count):
        entity_id, team_byte, player_id = _SLOT.unpack_from(data, off)
        if team_byte not in (0, 1):
            raise StreamFormatError(f"invalid team byte {team_byte}", offset=off + 1)
        if entity_id in seen:
            raise StreamFormatError(f"duplicate entity_id {entity_id}", offset=off)
        seen.add(entity_id)
        slots.append(PlayerSlot(entity_id, Team(team_byte), player_id))
        off += _SLOT.size
    header = StreamHeader(match_id, tuple(slots), interval, version)

    ticks: list[int] = []
    counts: list[int] = []
    offsets: list[int] = []
    prev_tick = -1
    n = len(data)
    while off < n:
        if n - off < _FRAME_HEAD.size:
            raise StreamFormatError("truncated frame header", offset=off)
        tick, count = _FRAME_HEAD.unpack_from(data, off)
        if tick <= prev_tick:
            raise StreamFormatError(
                f"tick {tick} not greater than previous {prev_tick}", offset=off
            )
        prev_tick = tick
        off += _FRAME_HEAD.size
        need = count * _UPDATE.size
        if n - off < need:
            raise StreamFormatError("truncated mid-update", offset=off)
        ticks.append(tick)
        counts.append(count)
        offsets.append(off)
        off += need
    if not ticks:
        raise StreamFormatError("stream contains no frames", offset=off)
    return header, ticks, counts, offsets


def _update_arrays(data, header, ticks, counts, offsets):
    """Concatenate every frame's update block and validate contents."""
    unit = UPDATE_DTYPE.itemsize
    total = sum(counts)
    buf = bytearray(total * unit)
    pos = 0
    for cnt, off in zip(counts, offsets):
        nbytes = cnt * unit
        buf[pos : pos + nbytes] = data[off : off + nbytes]
        pos += nbytes
    upd = np.frombuffer(bytes(buf), dtype=UPDATE_DTYPE)
    counts_arr = np.asarray(counts, dtype=np.int64)
    ticks_arr = np.asarray(ticks, dtype=np.int64)
    upd_ticks = np.repeat(ticks_arr[counts_arr > 0], counts_arr[counts_arr > 0])
    upd_frame = np.repeat(
        np.arange(len(counts), dtype=np.int64)[counts_arr > 0],
        counts_arr[counts_arr > 0],
    )

    known = np.zeros(256, dtype=bool)
    known[[p.entity_id for p in header.players]] = True
    ent = upd["entity"]
    bad = ~known[ent]
    if bad.any():
        i = int(np.argmax(bad))
        raise StreamFormatError(
            f"unknown entity_id {int(ent[i])}",
            offset=offsets[int(upd_frame[i])],
        )
    over = (upd["x"] >= GRID_SIZE) | (upd["y"] >= GRID_SIZE)
    if over.any():
        i = int(np.argmax(over))
        raise StreamFormatError(
            f"cell ({int(upd['x'][i])},{int(upd['y'][i])}) out of range",
            offset=offsets[int(upd_frame[i])],
        )
    if upd.size and not (np.isfinite(upd["vx"]).all() and np.isfinite(upd["vy"]).all()):
        raise StreamFormatError("non-finite sub-cell offset")
    # entity unique within frame: (frame, entity) pairs must not repeat
    key = upd_frame << 8 | ent.astype(np.int64)
    if np.unique(key).size != key.size:
        raise StreamFormatError("duplicate entity within a frame")
    return upd, upd_ticks


def stream_summary(data: bytes) -> tuple[StreamHeader, int]:
    """Validate structure and return (header, last standardized second)."""
    header, ticks, _, _ = _scan(data)
    return header, tick_to_second(ticks[-1], header.tick_interval_ms)


def decode(data: bytes) -> tuple[StreamHeader, tuple[Frame, ...]]:
    """Parse DTL2 bytes back into header and frames (inverse of encode).

    Rejects bad magic, unsupported versions, truncation, unknown entities,
    out-of-range cells, duplicate entities within a frame, non-increasing
    ticks and trailing garbage, naming the offending byte offset where it
    is meaningful.
    """
    header, ticks, counts, offsets = _scan(data)
    _update_arrays(data, header, ticks, counts, offsets)  # content validation

    frames = []
    for tick, cnt, off in zip(ticks, counts, offsets):
        block = np.frombuffer(data, dtype=UPDATE_DTYPE, count=cnt, offset=off)
        updates = tuple(map(FrameUpdate._make, block.tolist()))
        frames.append(Frame(tick, updates))
    return header, tuple(frames)


def resample_to_tracks(
    header: StreamHeader, frames: Iterable[Frame], duration_s: int
) -> tuple[PlayerTrack, ...]:
    """Reconstruct 1 Hz tracks for seconds 0..duration_s by carry-forward.

    A player's position at second s is their most recent update whose
    standardized second is <= s; ties within one second go to the later
    tick. Every player needs a tick-0 position (the keyframe).
    """
    interval = header.tick_interval_ms
    per: dict[int, tuple[list[int], list[tuple[int, int]]]] = {
        p.entity_id: ([], []) for p in header.players
    }
    for frame in frames:
        sec = tick_to_second(frame.tick, interval)
        for u in frame.updates:
            try:
                secs, cells = per[u.entity_id]
            except KeyError:
                raise StreamFormatError(
                    f"entity {u.entity_id} not declared in header"
                ) from None
            secs.append(sec)
            cells.append((u.cell_x, u.cell_y))

    tracks = []
    for slot in header.players:
        secs, cells = per[slot.entity_id]
        if not secs or secs[0] != 0:
            raise StreamFormatError(
                f"player {slot.player_id} (entity {slot.entity_id}) has no tick-0 position"
            )
        sec_arr = np.asarray(secs, dtype=np.int64)
        idx = np.searchsorted(sec_arr, np.arange(duration_s + 1), side="right") - 1
        track_cells = tuple(GridCell(*cells[i]) for i in idx.tolist())
        tracks.append(PlayerTrack(slot.player_id, slot.team, track_cells))
    return tuple(tracks)


def tracks_from_stream(data: bytes, duration_s: int):
    """Fused decode + resample for batch ingestion.

    Runs the same validation as :func:`decode` but skips building Frame
    objects; returns (header, tracks) with tracks as (10, duration_s+1, 2)
    uint8 cell coordinates in header slot order.
    """
    header, ticks, counts, offsets = _scan(data)
    upd, upd_ticks = _update_arrays(data, header, ticks, counts, offsets)
    secs = (upd_ticks * header.tick_interval_ms + 500) // 1000

    wanted = np.arange(duration_s + 1)
    out = np.empty((PLAYER_COUNT, duration_s + 1, 2), dtype=np.uint8)
    ent = upd["entity"]
    for i, slot in enumerate(header.players):
        mask = ent == slot.entity_id
        esecs = secs[mask]
        if esecs.size == 0 or esecs[0] != 0:
            raise StreamFormatError(
                f"player {slot.player_id} (entity {slot.entity_id}) has no tick-0 position"
            )
        idx = np.searchsorted(esecs, wanted, side="right") - 1
        out[i, :, 0] = upd["x"][mask][idx]
        out[i, :, 1] = upd["y"][mask][idx]
    return header, out


def tracks_to_objects(header: StreamHeader, cells: np.ndarray) -> tuple[PlayerTrack, ...]:
    """Wrap a tracks_from_stream cell array into PlayerTrack objects."""
    tracks = []
    for i, slot in enumerate(header.players):
        track_cells = tuple(GridCell(int(x), int(y)) for x, y in cells[i].tolist())
        tracks.append(PlayerTrack(slot.player_id, slot.team, track_cells))
    return tuple(tracks)


def write_trajectory_csv(match_id: int, tracks: Iterable[PlayerTrack], out: TextIO) -> None:
    """Write the per-match trajectory table: match_id,team,player_id,t,x,y."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRAJECTORY_COLUMNS)
    for track in tracks:
        team = str(track.team)
        for t, cell in enumerate(track.cells):
            w.writerow((match_id, team, track.player_id, t, cell.x, cell.y))


def read_trajectory_csv(inp: TextIO) -> tuple[int, tuple[PlayerTrack, ...]]:
    """Parse a trajectory CSV back into tracks (inverse of the writer)."""
    reader = csv.reader(inp)
    head = next(reader, None)
    if head is None or tuple(head) != TRAJECTORY_COLUMNS:
        raise ValueError(f"bad trajectory header: {head}")
    match_id: int | None = None
    order: list[tuple[Team, int]] = []
    cells: dict[tuple[Team, int], list[GridCell]] = {}
    for row in reader:
        mid, team_s, pid_s, t_s, x_s, y_s = row
        mid = int(mid)
        if match_id is None:
            match_id = mid
        elif mid != match_id:
            raise ValueError(f"mixed match ids {match_id} and {mid}")
        key = (Team.parse(team_s), int(pid_s))
        if key not in cells:
            order.append(key)
            cells[key] = []
        got = cells[key]
        if int(t_s) != len(got):
            raise ValueError(f"non-contiguous timestamps for player {key[1]}")
        got.append(GridCell(int(x_s), int(y_s)))
    if match_id is None:
        raise ValueError("empty trajectory file")
    tracks = tuple(
        PlayerTrack(pid, team, tuple(cells[(team, pid)])) for team, pid in order
    )
    return match_id, tracks


def write_stream(path, header: StreamHeader, frames: Iterable[Frame]) -> None:
    with open(path, "wb") as f:
        f.write(encode(header, frames))


def read_stream(path) -> tuple[StreamHeader, tuple[Frame, ...]]:
    with open(path, "rb") as f:
        return decode(f.read())
