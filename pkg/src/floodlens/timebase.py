"""Local-day bucketing for UTC event streams.

Raw timestamps are UTC; every analysis that aggregates "by day" buckets
events into local calendar days through a fixed whole-hour offset
(default -6). A day index counts days since 1970-01-01 in that local
frame, so index arithmetic is plain integer arithmetic and windows are
inclusive (start_day, end_day) pairs.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime

_EPOCH_ORDINAL = date(1970, 1, 1).toordinal()


@dataclass(frozen=True)
class DayBucketing:
    """Maps UTC instants to local day indices via a whole-hour offset."""

    tz_offset_hours: int = -6

    def day_of_epoch(self, epoch_s: int) -> int:
        return (int(epoch_s) + self.tz_offset_hours * 3600) // 86400

    def day_of(self, dt: datetime) -> int:
        return self.day_of_epoch(epoch_seconds(dt))

    def hour_of(self, dt: datetime) -> int:
        local = epoch_seconds(dt) + self.tz_offset_hours * 3600
        return (local % 86400) // 3600

    def day_start_epoch(self, day: int) -> int:
        """UTC epoch second at which local day `day` begins."""
        return day * 86400 - self.tz_offset_hours * 3600


def epoch_seconds(dt: datetime) -> int:
    if dt.tzinfo is None:
        raise ValueError("naive datetime; UTC-aware instants required")
    return int(dt.timestamp())


def day_to_date(day: int) -> date:
    """Calendar date labelling a local day index."""
    return date.fromordinal(_EPOCH_ORDINAL + day)


def date_to_day(d: date) -> int:
    return d.toordinal() - _EPOCH_ORDINAL


def day_iso(day: int) -> str:
    return day_to_date(day).isoformat()


def parse_day(text: str) -> int:
    return date_to_day(date.fromisoformat(text))


def parse_day_range(text: str) -> tuple[int, int]:
    """Parse an inclusive 'YYYY-MM-DD:YYYY-MM-DD' range into day indices."""
    lo, sep, hi = text.partition(":")
    if not sep:
        raise ValueError(f"bad day range {text!r}, expected 'A:B'")
    window = (parse_day(lo), parse_day(hi))
    check_window(window)
    return window


def check_window(window: tuple[int, int]) -> tuple[int, int]:
    start, end = window
    if start > end:
        raise ValueError(f"window start {start} after end {end}")
    return window


def window_days(window: tuple[int, int]) -> int:
    return window[1] - window[0] + 1
