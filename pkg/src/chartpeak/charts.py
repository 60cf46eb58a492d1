"""Daily chart parsing, panel assembly and per-track reduction."""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import (
    DuplicateDateError,
    DuplicateEntryError,
    DuplicateRankError,
    EmptyFileError,
    EmptyPanelError,
    IngestError,
    MissingColumnError,
    RankOutOfRangeError,
    RowParseError,
)

MAX_RANK = 200

# Chart exports name the same column differently across vintages.
HEADER_ALIASES: dict[str, tuple[str, ...]] = {
    "rank": ("rank", "position", "pos"),
    "track_uri": ("uri", "track_uri", "spotify_uri", "url", "track_url", "id"),
    "track_name": ("track_name", "track", "song", "title", "name"),
    "artist_name": ("artist_name", "artist", "artists", "artist_names"),
    "streams": ("streams", "stream_count", "plays"),
}


class RankClass(enum.IntEnum):
    TOP10 = 0
    MID11_50 = 1
    TAIL51PLUS = 2

    @classmethod
    def from_label(cls, text: str) -> "RankClass":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown rank class label {text!r}") from None


@dataclass(frozen=True)
class ChartEntry:
    chart_date: dt.date
    rank: int
    track_uri: str
    track_name: str
    artist_name: str
    streams: int


@dataclass(frozen=True)
class Panel:
    entries: tuple[ChartEntry, ...]
    dates: tuple[dt.date, ...]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class TrackRecord:
    track_uri: str
    track_name: str
    artist_name: str
    peak_rank: int
    streams: int
    previous_rank: int | None
    days_on_chart: int
    label: RankClass


def label_rank_class(peak_rank: int) -> RankClass:
    """Map a peak chart position to its tier; positions below 50 all share the tail class."""
    if not 1 <= peak_rank <= MAX_RANK:
        raise RankOutOfRangeError(f"peak rank {peak_rank} outside 1..{MAX_RANK}")
    if peak_rank <= 10:
        return RankClass.TOP10
    if peak_rank <= 50:
        return RankClass.MID11_50
    return RankClass.TAIL51PLUS


def _resolve_header(fieldnames: Sequence[str], source: str | None) -> dict[str, str]:
    normalized = {name.strip().lower(): name for name in fieldnames if name is not None}
    mapping = {}
    for canonical, aliases in HEADER_ALIASES.items():
        for alias in aliases:
            if alias in normalized:
                mapping[canonical] = normalized[alias]
                break
        else:
            raise MissingColumnError(
                f"header lacks a {canonical} column (accepted: {', '.join(aliases)})", source
            )
    return mapping


def _parse_int(raw: str | None, what: str, row: int, source: str | None) -> int:
    text = (raw or "").strip()
    try:
        return int(text)
    except ValueError:
        raise RowParseError(f"{what} {text!r} is not an integer", row, source) from None


def parse_chart_file(content: str, chart_date: dt.date, source: str | None = None) -> list[ChartEntry]:
    """Parse one daily chart CSV into entries, in rank order."""
    if not content.strip():
        raise EmptyFileError("chart file is empty", source)
    reader = csv.DictReader(io.StringIO(content.lstrip("﻿")))
    if not reader.fieldnames:
        raise EmptyFileError("chart file has no header", source)
    cols = _resolve_header(reader.fieldnames, source)

    entries: list[ChartEntry] = []
    seen_ranks: set[int] = set()
    seen_uris: set[str] = set()
    for record in reader:
        row = reader.line_num
        if all(not (v or "").strip() for k, v in record.items() if k is not None):
            continue
        rank = _parse_int(record.get(cols["rank"]), "rank", row, source)
        streams = _parse_int(record.get(cols["streams"]), "streams", row, source)
        if not 1 <= rank <= MAX_RANK:
            raise RowParseError(f"rank {rank} outside 1..{MAX_RANK}", row, source)
        if streams < 0:
            raise RowParseError(f"negative streams {streams}", row, source)
        uri = (record.get(cols["track_uri"]) or "").strip()
        if not uri:
            raise RowParseError("empty track uri", row, source)
        if rank in seen_ranks:
            raise DuplicateRankError(f"row {row}: rank {rank} appears twice on {chart_date}", source)
        if uri in seen_uris:
            raise DuplicateEntryError(f"row {row}: track {uri} appears twice on {chart_date}", source)
        seen_ranks.add(rank)
        seen_uris.add(uri)
        entries.append(
            ChartEntry(
                chart_date=chart_date,
                rank=rank,
                track_uri=uri,
                track_name=(record.get(cols["track_name"]) or "").strip(),
                artist_name=(record.get(cols["artist_name"]) or "").strip(),
                streams=streams,
            )
        )
    if not entries:
        raise EmptyFileError("chart file has a header but no data rows", source)
    entries.sort(key=lambda e: e.rank)
    return entries


def build_panel(files: Iterable[tuple[dt.date, str]]) -> Panel:
    """Concatenate daily files into one panel sorted by (date, rank).

    Parse errors are re-labelled with the ``YYYY-MM-DD.csv`` name of the
    offending file.
    """
    by_date: dict[dt.date, list[ChartEntry]] = {}
    for chart_date, text in files:
        source = f"{chart_date.isoformat()}.csv"
        if chart_date in by_date:
            raise DuplicateDateError(f"chart date {chart_date} supplied more than once", source)
        try:
            by_date[chart_date] = parse_chart_file(text, chart_date)
        except IngestError as exc:
            exc.source = exc.source or source
            raise
    dates = tuple(sorted(by_date))
    entries = tuple(e for d in dates for e in by_date[d])
    return Panel(entries=entries, dates=dates)


def load_chart_dir(path: str | Path) -> Panel:
    """Read every ``YYYY-MM-DD.csv`` file in ``path`` into a panel."""
    path = Path(path)
    files = []
    for file in sorted(path.glob("*.csv")):
        try:
            chart_date = dt.date.fromisoformat(file.stem)
        except ValueError:
            continue
        files.append((chart_date, file.read_text(encoding="utf-8")))
    if not files:
        raise EmptyPanelError(f"no chart files in {path}")
    return build_panel(files)


def reduce_to_tracks(panel: Panel) -> list[TrackRecord]:
    """Collapse the panel to one record per track, in order of first appearance.

    The retained row is the earliest entry attaining the track's peak rank;
    ``streams`` comes from that row and ``previous_rank`` is the track's rank
    on its latest chart date before it (``None`` if there is none).
    """
    if not panel.entries:
        raise EmptyPanelError("panel has no entries")
    history: dict[str, list[ChartEntry]] = defaultdict(list)
    for entry in panel.entries:
        history[entry.track_uri].append(entry)

    records = []
    for uri, rows in history.items():
        rows.sort(key=lambda e: e.chart_date)
        peak = min(e.rank for e in rows)
        pos = next(i for i, e in enumerate(rows) if e.rank == peak)
        kept = rows[pos]
        records.append(
            TrackRecord(
                track_uri=uri,
                track_name=kept.track_name,
                artist_name=kept.artist_name,
                peak_rank=peak,
                streams=kept.streams,
                previous_rank=rows[pos - 1].rank if pos > 0 else None,
                days_on_chart=len({e.chart_date for e in rows}),
                label=label_rank_class(peak),
            )
        )
    return records


TRACK_COLUMNS = (
    "uri", "name", "artist", "peak_rank", "streams", "previous_rank", "days_on_chart", "label",
)


def write_tracks_csv(records: Iterable[TrackRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACK_COLUMNS)
        for r in records:
            writer.writerow([
                r.track_uri, r.track_name, r.artist_name, r.peak_rank, r.streams,
                "" if r.previous_rank is None else r.previous_rank,
                r.days_on_chart, r.label.name,
            ])


def read_tracks_csv(path: str | Path) -> list[TrackRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACK_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise MissingColumnError(f"tracks file lacks columns {sorted(missing)}", str(path))
        for row in reader:
            prev = row["previous_rank"].strip()
            records.append(
                TrackRecord(
                    track_uri=row["uri"],
                    track_name=row["name"],
                    artist_name=row["artist"],
                    peak_rank=int(row["peak_rank"]),
                    streams=int(row["streams"]),
                    previous_rank=int(prev) if prev else None,
                    days_on_chart=int(row["days_on_chart"]),
                    label=RankClass.from_label(row["label"]),
                )
            )
    return records
