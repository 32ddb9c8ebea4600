"""Command-line front end.

Subcommands: ingest, zones, distance, phases, anova, cluster, heatmap,
synth, zonemap-draft. Every command is deterministic for fixed inputs,
flags and seed; the worker count (TEAMTRACE_WORKERS) never changes any
output byte.

Exit codes: 0 success, 1 usage error, 2 data error, 3 partial batch
failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import measures, pdclust, stats, synth, tickstream
from .core import GRID_SIZE, MatchRecord, Phase, SkillTier, Team
from .defaultmap import DEFAULT_LEGEND_TEXT, default_zone_map
from .zonemap import ZoneLabel, ZoneMap, draft_zone_map, load_zone_map, parse_legend, render_zone_map

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PARTIAL = 3

WORKERS_ENV = "TEAMTRACE_WORKERS"


@dataclass(frozen=True)
class RunConfig:
    """Defaults mirror the reference analysis configuration."""

    min_dwell_s: int = 5
    window_s: int = 1
    k: int = 3
    r: float = 1.15
    m: int | str = 5  # or "auto" for the minimum-entropy heuristic
    delay: int = 1
    seed: int = 0
    zone_map_path: str | None = None
    legend_path: str | None = None
    out_dir: str = "."

    @property
    def workers(self) -> int:
        return _workers_from_env()


def _workers_from_env() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{WORKERS_ENV} must be >= 1")
    return n


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; we reserve 2 for data
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _pool_map(fn, items: Sequence, workers: int) -> list:
    """Order-preserving map; results identical for any worker count."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (workers * 4))))


def _load_zone_map(args) -> ZoneMap:
    if args.zone_map and args.legend:
        try:
            pix = Path(args.zone_map).read_bytes()
            leg = Path(args.legend).read_text()
        except OSError as e:
            raise DataError(str(e)) from None
        return load_zone_map(pix, leg)
    if args.zone_map or args.legend:
        raise UsageError("--map and --legend must be given together")
    return default_zone_map()


def _trajectory_files(paths: Iterable[str]) -> list[Path]:
    out: list[Path] = []
    for p in paths:
        path = Path(p)
        if path.is_dir():
            out.extend(sorted(path.glob("*.csv")))
        else:
            out.append(path)
    if not out:
        raise DataError("no trajectory files found")
    return out


def _read_tracks(path: Path):
    try:
        with open(path) as f:
            return tickstream.read_trajectory_csv(f)
    except (OSError, ValueError) as e:
        raise DataError(f"{path}: {e}") from None


def _read_meta(path: str) -> dict[int, synth.MatchMeta]:
    try:
        with open(path) as f:
            return synth.read_metadata_csv(f)
    except (OSError, ValueError) as e:
        raise DataError(f"{path}: {e}") from None


def _load_labeled_matches(args) -> list[MatchRecord]:
    meta = _read_meta(args.meta)
    records = []
    for path in _trajectory_files(args.trajectories):
        match_id, tracks = _read_tracks(path)
        if match_id not in meta:
            raise DataError(f"{path}: match {match_id} missing from metadata")
        m = meta[match_id]
        records.append(MatchRecord(match_id, m.tier, m.winner, len(tracks[0]) - 1, tracks))
    records.sort(key=lambda r: r.match_id)
    return records


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ── commands ──────────────────────────────────────────────────────────────


def _ingest_one(item):
    path, durations = item
    try:
        data = Path(path).read_bytes()
        header, last_second = tickstream.stream_summary(data)
        # recorded duration wins over the last-update heuristic
        duration = durations.get(header.match_id, last_second)
        header, cells = tickstream.tracks_from_stream(data, duration)
        tracks = tickstream.tracks_to_objects(header, cells)
        return (str(path), header.match_id, tracks, None)
    except (OSError, ValueError) as e:
        return (str(path), None, None, str(e))


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    meta = _read_meta(args.meta) if args.meta else {}
    durations = {mid: m.duration_s for mid, m in meta.items()}
    items = [(p, durations) for p in sorted(args.streams)]
    results = _pool_map(_ingest_one, items, _workers_from_env())

    failures = 0
    for path, match_id, tracks, err in results:
        if err is not None:
            failures += 1
            print(f"error: {path}: {err}", file=sys.stderr)
            continue
        with open(out / f"{match_id}.csv", "w") as f:
            tickstream.write_trajectory_csv(match_id, tracks, f)
    if failures == len(results):
        return EXIT_DATA
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_zones(args) -> int:
    zmap = _load_zone_map(args)
    records = _load_labeled_matches(args)
    rows = []
    for rec in records:
        for track in rec.tracks:
            st = measures.zone_change_stats(track, zmap, args.min_dwell)
            rows.append(
                (
                    rec.match_id,
                    st.player_id,
                    track.team,
                    rec.tier,
                    track.team is rec.winner,
                    st.changes,
                    st.rate_per_min,
                )
            )
    out = _out_dir(args)
    with open(out / "zone_changes.csv", "w") as f:
        measures.write_zone_changes_csv(f, rows)
    return EXIT_OK


def _series_for(records: Iterable[MatchRecord]) -> list[measures.LabeledSeries]:
    out = []
    for rec in records:
        for team in Team:
            s = measures.distance_series(rec, team)
            out.append(measures.LabeledSeries(s, rec.tier, team is rec.winner))
    return out


def cmd_distance(args) -> int:
    series = []
    for path in _trajectory_files(args.trajectories):
        match_id, tracks = _read_tracks(path)
        for team in Team:
            mates = [t for t in tracks if t.team is team]
            if len(mates) < 2:
                raise DataError(f"{path}: team {team} has fewer than 2 tracks")
            cells = np.array([[(c.x, c.y) for c in t.cells] for t in mates])
            series.append(
                measures.DistanceSeries(match_id, team, measures.distance_values(cells))
            )
    series.sort(key=lambda s: (s.match_id, s.team.value))
    out = _out_dir(args)
    with open(out / "distance_series.csv", "w") as f:
        measures.write_distance_csv(f, series)
    return EXIT_OK


def cmd_phases(args) -> int:
    records = _load_labeled_matches(args)
    labeled = _series_for(records)
    if args.window > 1:
        labeled = [
            measures.LabeledSeries(
                measures.DistanceSeries(
                    ls.series.match_id,
                    ls.series.team,
                    measures.moving_average(ls.series.values, args.window),
                ),
                ls.tier,
                ls.won,
            )
            for ls in labeled
        ]
    rows = []
    for tier in SkillTier:
        for won in (True, False):
            if not any(ls.tier is tier and ls.won == won for ls in labeled):
                continue
            for phase in Phase:
                for t, mean_d, n in measures.aggregate_by_category(labeled, tier, won, phase):
                    rows.append((tier, won, phase, t, mean_d, n))
    if not rows:
        raise DataError("no aggregatable categories")
    out = _out_dir(args)
    with open(out / "phase_aggregates.csv", "w") as f:
        measures.write_aggregate_csv(f, rows)
    return EXIT_OK


def cmd_anova(args) -> int:
    zmap = _load_zone_map(args)
    records = _load_labeled_matches(args)

    rate_by_tier: dict[SkillTier, list[float]] = {}
    rate_by_outcome: dict[bool, list[float]] = {True: [], False: []}
    dist_by_tier: dict[SkillTier, list[float]] = {}
    dist_by_outcome: dict[bool, list[float]] = {True: [], False: []}
    for rec in records:
        for track in rec.tracks:
            st = measures.zone_change_stats(track, zmap, args.min_dwell)
            won = track.team is rec.winner
            rate_by_tier.setdefault(rec.tier, []).append(st.rate_per_min)
            rate_by_outcome[won].append(st.rate_per_min)
        for team in Team:
            mean_d = float(measures.distance_series(rec, team).values.mean())
            dist_by_tier.setdefault(rec.tier, []).append(mean_d)
            dist_by_outcome[team is rec.winner].append(mean_d)

    rows = []
    if len(rate_by_tier) >= 2:
        groups = [rate_by_tier[t] for t in SkillTier if t in rate_by_tier]
        rows.append(("zone_change_rate", "tier", stats.one_way_anova(groups)))
        groups = [dist_by_tier[t] for t in SkillTier if t in dist_by_tier]
        rows.append(("team_distance", "tier", stats.one_way_anova(groups)))
    if rate_by_outcome[True] and rate_by_outcome[False]:
        rows.append(
            ("zone_change_rate", "outcome",
             stats.one_way_anova([rate_by_outcome[True], rate_by_outcome[False]]))
        )
        rows.append(
            ("team_distance", "outcome",
             stats.one_way_anova([dist_by_outcome[True], dist_by_outcome[False]]))
        )
    if not rows:
        raise DataError("need at least two tiers or both outcomes for ANOVA")
    out = _out_dir(args)
    with open(out / "anova.csv", "w") as f:
        stats.write_anova_csv(f, rows)
    doc = [
        {
            "measure": measure,
            "factor": factor,
            # strict JSON has no Infinity literal
            "F": res.F if math.isfinite(res.F) else "inf",
            "df1": res.df_between,
            "df2": res.df_within,
            "p": res.p,
            "p_display": stats.format_p_value(res.p),
        }
        for measure, factor, res in rows
    ]
    with open(out / "anova.json", "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    return EXIT_OK


def cmd_cluster(args) -> int:
    if args.k < 2:
        raise UsageError("k must be at least 2")
    if args.r <= 1:
        raise UsageError("membership exponent r must exceed 1")
    records = _load_labeled_matches(args)
    labeled = _series_for(records)
    series = [ls.series.values for ls in labeled]
    ids = [f"{ls.series.match_id}:{ls.series.team}" for ls in labeled]
    facet_labels = [(ls.tier, ls.won) for ls in labeled]

    if args.m == "auto":
        m = pdclust.min_entropy_dimension(series, delay=args.delay)
    else:
        try:
            m = int(args.m)
        except ValueError:
            raise UsageError(f"--m must be an integer or 'auto', got {args.m!r}") from None
    matrix = pdclust.distance_matrix(series, m=m, delay=args.delay, ids=ids)
    fuzzy = pdclust.fanny(matrix, k=args.k, r=args.r, seed=args.seed)
    crisp_pam = pdclust.pam(matrix, k=args.k, seed=args.seed)
    sil_fuzzy = pdclust.silhouette(matrix, fuzzy.crisp)
    sil_pam = pdclust.silhouette(matrix, crisp_pam.labels)
    report = pdclust.cluster_report(series, fuzzy, matrix, labels=facet_labels)

    out = _out_dir(args)
    with open(out / "dissimilarity.csv", "w") as f:
        pdclust.write_matrix_csv(f, matrix)
    doc = {
        "config": {
            "k": args.k,
            "r": args.r,
            "m": m,
            "delay": args.delay,
            "seed": args.seed,
            "min_dwell_s": args.min_dwell,
        },
        "ids": ids,
        "memberships": [[round(v, 12) for v in row] for row in fuzzy.memberships.tolist()],
        "crisp": fuzzy.crisp.tolist(),
        "converged": fuzzy.converged,
        "objective": fuzzy.objective,
        "silhouette": {
            "fuzzy_average": sil_fuzzy.average,
            "fuzzy_widths": sil_fuzzy.widths.tolist(),
            "pam_average": sil_pam.average,
            "pam_medoids": list(crisp_pam.medoids),
        },
        "clusters": [
            {
                "cluster": c.cluster,
                "size": c.size,
                "mean_of_series_means": c.mean_of_series_means,
                "variance_of_series_means": c.variance_of_series_means,
                "mean_duration_s": c.mean_duration_s,
                "facets": c.facets,
            }
            for c in report.clusters
        ],
    }
    with open(out / "clusters.json", "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    if args.end is not None and args.end < args.start:
        raise UsageError("--end must not precede --start")
    files = _trajectory_files(args.trajectories)
    grid = np.zeros((GRID_SIZE, GRID_SIZE), dtype=np.int64)
    total = 0
    for path in files:
        _, tracks = _read_tracks(path)
        for track in tracks:
            stop = len(track) if args.end is None else min(len(track), args.end + 1)
            window = track.cells[args.start : stop]
            for cell in window:
                grid[cell.x, cell.y] += 1
            total += len(window)
    if total == 0:
        raise DataError("no positions to map")

    out = _out_dir(args)
    # CSV and PPM share the image orientation: row 0 is the north edge
    img = grid.T[::-1, :]
    with open(out / "heatmap.csv", "w") as f:
        for row in img:
            f.write(",".join(str(v) for v in row.tolist()))
            f.write("\n")
    peak = int(img.max())
    intensity = (img * 255 // peak).astype(np.uint8) if peak else img.astype(np.uint8)
    pixels = np.repeat(intensity[:, :, None], 3, axis=2)
    with open(out / "heatmap.ppm", "wb") as f:
        f.write(f"P6\n{GRID_SIZE} {GRID_SIZE}\n255\n".encode("ascii"))
        f.write(pixels.tobytes())
    return EXIT_OK


_DEFAULT_REGIMES = (
    ("Professional", 6.0, 6.0),
    ("High", 10.0, 4.0),
    ("Normal", 14.0, 2.0),
)


def _synth_one(item):
    sigma, rate, duration, zmap_codes_legend, seed, match_id, tier_name = item
    zmap = default_zone_map() if zmap_codes_legend is None else zmap_codes_legend
    params = synth.RegimeParams(sigma, rate, duration)
    stream, meta = synth.generate_match(
        params, params, zmap, seed=seed, match_id=match_id, tier=SkillTier.parse(tier_name)
    )
    return stream, meta


def cmd_synth(args) -> int:
    zmap = _load_zone_map(args)
    regimes = []
    for regime_str in args.regime or []:
        try:
            name, sigma, rate = regime_str.split(":")
            regimes.append((name, float(sigma), float(rate)))
            SkillTier.parse(name)
        except ValueError:
            raise UsageError(f"bad --regime {regime_str!r}, want TIER:SIGMA:RATE") from None
    if not regimes:
        regimes = list(_DEFAULT_REGIMES)

    items = []
    match_id = args.first_id
    for ri, (name, sigma, rate) in enumerate(regimes):
        for j in range(args.matches):
            items.append(
                (sigma, rate, args.duration, None if args.zone_map is None else zmap,
                 args.seed * 1_000_003 + ri * 10_000 + j, match_id, name)
            )
            match_id += 1
    results = _pool_map(_synth_one, items, _workers_from_env())

    out = _out_dir(args)
    metas = []
    for stream, meta in results:
        (out / f"{meta.match_id}.dtl2").write_bytes(stream)
        metas.append(meta)
    with open(out / "matches.csv", "w") as f:
        synth.write_metadata_csv(f, metas)
    return EXIT_OK


def cmd_zonemap_draft(args) -> int:
    legend = parse_legend(Path(args.legend).read_text()) if args.legend else parse_legend(DEFAULT_LEGEND_TEXT)
    provisional = ZoneLabel.parse(args.provisional)
    tracks = []
    for path in _trajectory_files(args.trajectories):
        _, file_tracks = _read_tracks(path)
        tracks.extend(file_tracks)
    draft = draft_zone_map(tracks, legend, provisional)
    out = _out_dir(args)
    (out / "draft_map.ppm").write_bytes(render_zone_map(draft))
    return EXIT_OK


# ── argument plumbing ─────────────────────────────────────────────────────


def _apply_config_file(argv: list[str]) -> dict[str, str]:
    """Extract --config FILE and return its key=value pairs."""
    if "--config" not in argv:
        return {}
    i = argv.index("--config")
    if i + 1 >= len(argv):
        raise UsageError("--config needs a file argument")
    path = argv[i + 1]
    del argv[i : i + 2]
    settings = {}
    try:
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            settings[key.strip().replace("-", "_")] = value.strip()
    except OSError as e:
        raise UsageError(f"cannot read config file: {e}") from None
    return settings


def _add_common(p: _Parser, *, meta_required: bool = False, zone_args: bool = False) -> None:
    p.add_argument("--trajectories", nargs="+", required=True,
                   help="trajectory CSV files or directories of them")
    p.add_argument("--meta", required=meta_required,
                   help="match metadata CSV (match_id,tier,winner,duration_s)")
    if zone_args:
        p.add_argument("--map", dest="zone_map", help="zone pixmap (P3/P6 PPM)")
        p.add_argument("--legend", help="zone legend text file")
    p.add_argument("-o", "--out", default=".", help="output directory")


def build_parser() -> _Parser:
    cfg = RunConfig()
    parser = _Parser(prog="teamtrace", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="decode DTL2 streams to trajectory CSVs")
    p.add_argument("streams", nargs="+", help="DTL2 files")
    p.add_argument("--meta", help="metadata CSV fixing each match's duration")
    p.add_argument("-o", "--out", default=".", help="output directory")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("zones", help="per-player zone-change table")
    _add_common(p, meta_required=True, zone_args=True)
    p.add_argument("--min-dwell", type=int, default=cfg.min_dwell_s,
                   help="seconds a stay must last to count")
    p.set_defaults(fn=cmd_zones)

    p = sub.add_parser("distance", help="per-second intra-team distance series")
    _add_common(p)
    p.set_defaults(fn=cmd_distance)

    p = sub.add_parser("phases", help="per-category distance aggregates by phase")
    _add_common(p, meta_required=True)
    p.add_argument("--window", type=int, default=cfg.window_s,
                   help="trailing moving-average window, seconds")
    p.set_defaults(fn=cmd_phases)

    p = sub.add_parser("anova", help="one-way ANOVA over tiers and outcomes")
    _add_common(p, meta_required=True, zone_args=True)
    p.add_argument("--min-dwell", type=int, default=cfg.min_dwell_s)
    p.set_defaults(fn=cmd_anova)

    p = sub.add_parser("cluster", help="permutation-distribution clustering")
    _add_common(p, meta_required=True)
    p.add_argument("--k", type=int, default=cfg.k, help="cluster count")
    p.add_argument("--r", type=float, default=cfg.r, help="membership exponent")
    p.add_argument("--m", default=str(cfg.m), help="embedding dimension or 'auto'")
    p.add_argument("--delay", type=int, default=cfg.delay)
    p.add_argument("--seed", type=int, default=cfg.seed)
    p.add_argument("--min-dwell", type=int, default=cfg.min_dwell_s)
    p.set_defaults(fn=cmd_cluster)

    p = sub.add_parser("heatmap", help="visit-count grid and grayscale pixmap")
    _add_common(p)
    p.add_argument("--start", type=int, default=0, help="first second counted")
    p.add_argument("--end", type=int, default=None, help="last second counted")
    p.set_defaults(fn=cmd_heatmap)

    p = sub.add_parser("synth", help="generate synthetic matches")
    p.add_argument("--matches", type=int, default=5, help="matches per regime")
    p.add_argument("--duration", type=int, default=900, help="match length, seconds")
    p.add_argument("--seed", type=int, default=cfg.seed)
    p.add_argument("--first-id", type=int, default=1, help="first match id")
    p.add_argument("--regime", action="append",
                   help="TIER:SIGMA:RATE, repeatable (default: three planted tiers)")
    p.add_argument("--map", dest="zone_map", help="zone pixmap (P3/P6 PPM)")
    p.add_argument("--legend", help="zone legend text file")
    p.add_argument("-o", "--out", default=".", help="output directory")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("zonemap-draft", help="draft zone map from observed cells")
    p.add_argument("--trajectories", nargs="+", required=True)
    p.add_argument("--legend", help="legend supplying the draft colors")
    p.add_argument("--provisional", default=str(ZoneLabel.JUNGLE),
                   help="zone name painted on visited cells")
    p.add_argument("-o", "--out", default=".", help="output directory")
    p.set_defaults(fn=cmd_zonemap_draft)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        overrides = _apply_config_file(argv)
        try:
            args = parser.parse_args(argv)
        except SystemExit as e:
            return int(e.code or 0)
        # config file fills in anything not given explicitly on the line
        for key, value in overrides.items():
            if hasattr(args, key) and f"--{key.replace('_', '-')}" not in argv:
                current = getattr(args, key)
                cast = type(current) if current is not None and not isinstance(current, bool) else str
                setattr(args, key, cast(value))
        return args.fn(args)
    except UsageError as e:
        print(f"teamtrace: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as e:
        print(f"teamtrace: error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, OSError) as e:
        print(f"teamtrace: error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
