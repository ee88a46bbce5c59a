"""CDR log and tower registry ingestion.

File formats (UTF-8, LF line endings, '#'-prefixed comment lines ignored,
header optional on input, always written on export):

    CDR:      origin_id,dest_id,timestamp_utc,duration_s,origin_bts,dest_bts
    registry: bts_id,lat,lon

Timestamps are ISO-8601 UTC instants at second precision ('Z' suffix
canonical; an explicit numeric offset is accepted and normalised to UTC).
Fields must not contain commas: the parser is a plain line splitter with
no quoting support, by design, so that multi-gigabyte logs stream fast.
Malformed lines never abort a run (unless strict mode is on); they are
reported with their physical 1-based line number and a reason.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Iterable, Iterator

from .errors import DataError

CDR_HEADER = "origin_id,dest_id,timestamp_utc,duration_s,origin_bts,dest_bts"
BTS_HEADER = "bts_id,lat,lon"


@dataclass(frozen=True, slots=True)
class CdrRecord:
    """One anonymised call event."""

    origin_id: str
    dest_id: str
    timestamp: datetime
    duration_s: int
    origin_bts: str
    dest_bts: str | None = None

    @property
    def epoch_s(self) -> int:
        return int(self.timestamp.timestamp())


@dataclass(frozen=True, slots=True)
class BtsSite:
    """A base transceiver station with its geographical position."""

    bts_id: str
    lat: float
    lon: float


@dataclass(frozen=True, slots=True)
class Diagnostic:
    """Per-line parse problem; processing continued past it."""

    line_no: int
    reason: str

    def __str__(self) -> str:
        return f"line {self.line_no}: {self.reason}"


def parse_timestamp(text: str) -> datetime:
    """Parse an ISO-8601 UTC instant; 'Z' suffix or explicit offset."""
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        raise ValueError("naive timestamp")
    return dt.astimezone(timezone.utc)


def format_timestamp(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_cdr_line(line: str) -> tuple[CdrRecord | None, str | None]:
    """Parse one data line; returns (record, None) or (None, reason)."""
    parts = line.split(",")
    if len(parts) != 6:
        return None, "bad field count"
    origin_id, dest_id, ts, dur, origin_bts, dest_bts = parts
    if not origin_id:
        return None, "missing origin_id"
    if not origin_bts:
        return None, "missing origin_bts"
    try:
        timestamp = parse_timestamp(ts)
    except ValueError:
        return None, "bad timestamp"
    if not dur.isdigit():
        return None, "bad duration"
    return (
        CdrRecord(origin_id, dest_id, timestamp, int(dur), origin_bts, dest_bts or None),
        None,
    )


def iter_cdr_file(
    path: str,
    diagnostics: list[Diagnostic] | None = None,
    strict: bool = False,
) -> Iterator[CdrRecord]:
    """Stream records from a CDR file without materialising them.

    Malformed lines are appended to `diagnostics` (if given) and skipped;
    in strict mode the first malformed line raises DataError. Blank
    lines, '#' comments and header lines are ignored.
    """
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read CDR file {path}: {exc}") from exc
    with f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line or line.startswith("#") or line == CDR_HEADER:
                continue
            record, reason = parse_cdr_line(line)
            if record is None:
                if strict:
                    raise DataError(f"{path}: line {line_no}: {reason}")
                if diagnostics is not None:
                    diagnostics.append(Diagnostic(line_no, reason))
                continue
            yield record


def parse_cdr_file(path: str, strict: bool = False) -> tuple[list[CdrRecord], list[Diagnostic]]:
    """Parse a whole CDR file; see iter_cdr_file for the streaming form."""
    diagnostics: list[Diagnostic] = []
    records = list(iter_cdr_file(path, diagnostics, strict=strict))
    return records, diagnostics


def format_record(rec: CdrRecord) -> str:
    return ",".join(
        (
            rec.origin_id,
            rec.dest_id,
            format_timestamp(rec.timestamp),
            str(rec.duration_s),
            rec.origin_bts,
            rec.dest_bts or "",
        )
    )


def export_cdr_csv(records: Iterable[CdrRecord], path: str) -> None:
    """Write records in canonical form: header, LF, second precision."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(CDR_HEADER + "\n")
        for rec in records:
            f.write(format_record(rec) + "\n")


def parse_bts_registry(path: str) -> dict[str, BtsSite]:
    """Load a tower registry; duplicate ids or out-of-range coords are fatal."""
    registry: dict[str, BtsSite] = {}
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read BTS registry {path}: {exc}") from exc
    with f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line or line.startswith("#") or line == BTS_HEADER:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DataError(f"{path}: line {line_no}: bad field count")
            bts_id, lat_s, lon_s = parts
            if not bts_id:
                raise DataError(f"{path}: line {line_no}: missing bts_id")
            try:
                lat, lon = float(lat_s), float(lon_s)
            except ValueError:
                raise DataError(f"{path}: line {line_no}: bad coordinate") from None
            if not (-90.0 <= lat <= 90.0):
                raise DataError(f"{path}: line {line_no}: latitude {lat} out of range")
            if not (-180.0 <= lon <= 180.0):
                raise DataError(f"{path}: line {line_no}: longitude {lon} out of range")
            if bts_id in registry:
                raise DataError(f"{path}: line {line_no}: duplicate bts_id {bts_id!r}")
            registry[bts_id] = BtsSite(bts_id, lat, lon)
    return registry


def export_bts_registry(registry: dict[str, BtsSite], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(BTS_HEADER + "\n")
        for bts_id in sorted(registry):
            site = registry[bts_id]
            f.write(f"{site.bts_id},{site.lat!r},{site.lon!r}\n")


@dataclass(frozen=True)
class BBox:
    """Inclusive lat/lon bounding box."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    def __post_init__(self) -> None:
        if self.lat_min > self.lat_max or self.lon_min > self.lon_max:
            raise ValueError(f"degenerate bbox {self}")

    def contains(self, lat: float, lon: float) -> bool:
        return self.lat_min <= lat <= self.lat_max and self.lon_min <= lon <= self.lon_max


def filter_bbox(
    records: Iterable[CdrRecord],
    registry: dict[str, BtsSite],
    bbox: BBox,
) -> tuple[list[CdrRecord], list[tuple[CdrRecord, tuple[str, ...]]]]:
    """Keep records with at least one referenced tower inside the box.

    A record is kept iff its origin or destination tower resolves to a
    registry site inside `bbox`. Records referencing towers absent from
    the registry are additionally reported in the quarantine list
    (record, unknown tower ids) -- they may still be kept through their
    other, known tower.
    """
    kept: list[CdrRecord] = []
    quarantine: list[tuple[CdrRecord, tuple[str, ...]]] = []
    for rec in records:
        towers = [rec.origin_bts]
        if rec.dest_bts:
            towers.append(rec.dest_bts)
        unknown = tuple(t for t in towers if t not in registry)
        if unknown:
            quarantine.append((rec, unknown))
        inside = False
        for t in towers:
            site = registry.get(t)
            if site is not None and bbox.contains(site.lat, site.lon):
                inside = True
                break
        if inside:
            kept.append(rec)
    return kept, quarantine
