"""Per-tower daily communication activity and its anomaly metric.

The raw measurement x(t) for a tower is the number of unique phones
placing or receiving calls there on local day t. Each tower's baseline
window yields (mu, sigma); the variation metric is the z-score of x(t)
against that baseline, clamped to +/-z_max. Per-tower maxima feed the
exceedance curve (share of towers whose maximum exceeds a threshold)
and the hot-tower ranking.

Two ingestion routes exist and must agree exactly:

  * compute_activity() consumes parsed CdrRecord objects;
  * activity_from_file() is a fused streaming parser+aggregator for
    large logs -- memory is bounded by the per-tower day maps, never by
    record count, and the file may be split across worker processes
    (results are merged by input offset, so output is identical to the
    single-threaded order).
"""

from __future__ import annotations

import bisect
import math
import os
from dataclasses import dataclass
from multiprocessing import Pool
from typing import Iterable, Mapping

from .cdr import CDR_HEADER, BtsSite, CdrRecord, Diagnostic, parse_timestamp
from .errors import DataError
from .timebase import DayBucketing, check_window, day_iso, parse_day

DEFAULT_Z_MAX = 100.0


@dataclass(frozen=True)
class ActivitySeries:
    """Daily unique-phone counts for one tower; no gaps, zeros explicit."""

    bts_id: str
    start_day: int
    values: list[int]

    def __post_init__(self) -> None:
        if not self.values:
            raise ValueError(f"{self.bts_id}: empty activity series")

    @property
    def end_day(self) -> int:
        return self.start_day + len(self.values) - 1

    def covers(self, window: tuple[int, int]) -> bool:
        return self.start_day <= window[0] and window[1] <= self.end_day

    def slice_window(self, window: tuple[int, int]) -> list[int]:
        check_window(window)
        if not self.covers(window):
            raise DataError(
                f"{self.bts_id}: window {window} outside series "
                f"[{self.start_day}, {self.end_day}]"
            )
        lo = window[0] - self.start_day
        return self.values[lo : lo + window[1] - window[0] + 1]


@dataclass(frozen=True)
class BaselineStats:
    """Baseline mean and population standard deviation of x(t)."""

    bts_id: str
    mu: float
    sigma: float
    n_days: int
    degenerate: bool


@dataclass(frozen=True)
class ZScoreSeries:
    """Clamped z-scores of x(t) against the tower baseline."""

    bts_id: str
    start_day: int
    z: list[float]
    clamp: float = DEFAULT_Z_MAX
    degenerate: bool = False

    @property
    def end_day(self) -> int:
        return self.start_day + len(self.z) - 1

    def covers(self, window: tuple[int, int]) -> bool:
        return self.start_day <= window[0] and window[1] <= self.end_day

    def slice_window(self, window: tuple[int, int]) -> list[float]:
        check_window(window)
        if not self.covers(window):
            raise DataError(
                f"{self.bts_id}: window {window} outside series "
                f"[{self.start_day}, {self.end_day}]"
            )
        lo = window[0] - self.start_day
        return self.z[lo : lo + window[1] - window[0] + 1]


def compute_activity(
    records: Iterable[CdrRecord],
    registry: Mapping[str, BtsSite],
    bucketing: DayBucketing,
) -> dict[str, ActivitySeries]:
    """Count unique phones per tower per local day.

    A record credits its origin phone to the origin tower and, when a
    destination tower is logged, its destination phone to that tower.
    Towers absent from the registry contribute nothing; every registry
    tower gets a series spanning the full observed day range, zeros
    where it saw no phones. An empty record stream yields {}.
    """
    sets: dict[tuple[str, int], set[str]] = {}
    day_min: int | None = None
    day_max: int | None = None
    for rec in records:
        day = bucketing.day_of(rec.timestamp)
        if day_min is None or day < day_min:
            day_min = day
        if day_max is None or day > day_max:
            day_max = day
        if rec.origin_bts in registry:
            key = (rec.origin_bts, day)
            s = sets.get(key)
            if s is None:
                s = sets[key] = set()
            s.add(rec.origin_id)
        if rec.dest_bts and rec.dest_id and rec.dest_bts in registry:
            key = (rec.dest_bts, day)
            s = sets.get(key)
            if s is None:
                s = sets[key] = set()
            s.add(rec.dest_id)
    if day_min is None or day_max is None:
        return {}
    return _series_from_counts(
        {k: len(v) for k, v in sets.items()}, registry, day_min, day_max
    )


def _series_from_counts(
    counts: Mapping[tuple[str, int], int],
    registry: Mapping[str, BtsSite],
    day_min: int,
    day_max: int,
) -> dict[str, ActivitySeries]:
    n_days = day_max - day_min + 1
    per_tower: dict[str, list[int]] = {bts_id: [0] * n_days for bts_id in registry}
    for (tower, day), n in counts.items():
        values = per_tower.get(tower)
        if values is not None:
            values[day - day_min] = n
    return {
        bts_id: ActivitySeries(bts_id, day_min, per_tower[bts_id])
        for bts_id in sorted(per_tower)
    }


# ---------------------------------------------------------------------------
# Fused streaming ingestion


def _aggregate_chunk(
    path: str,
    start: int,
    end: int,
    tz_offset_hours: int,
    strict: bool,
) -> tuple[dict[tuple[str, int], set[str]], int | None, int | None, list[tuple[int, str]], int]:
    """Aggregate one byte range of a CDR file.

    A line belongs to the chunk containing its first byte; a chunk
    starting mid-line skips the partial line (its owner reads past the
    boundary to finish it). Returns per-(tower, day) phone sets, the
    observed day range, (relative_line_no, reason) diagnostics and the
    number of physical lines consumed.
    """
    sets: dict[tuple[str, int], set[str]] = {}
    day_min: int | None = None
    day_max: int | None = None
    diags: list[tuple[int, str]] = []
    day_cache: dict[str, int] = {}
    tz_off = tz_offset_hours * 3600
    n_lines = 0
    sets_get = sets.get
    cache_get = day_cache.get
    with open(path, "rb") as f:
        f.seek(start)
        if start:
            f.readline()
        pos = f.tell()
        readline = f.readline
        while pos < end:
            raw = readline()
            if not raw:
                break
            pos += len(raw)
            n_lines += 1
            line = raw.decode("utf-8").rstrip("\r\n")
            if not line or line.startswith("#") or line == CDR_HEADER:
                continue
            parts = line.split(",")
            if len(parts) != 6:
                if strict:
                    raise DataError(f"{path}: line {n_lines}: bad field count")
                diags.append((n_lines, "bad field count"))
                continue
            o_id, d_id, ts, dur, o_bts, d_bts = parts
            if not o_id:
                if strict:
                    raise DataError(f"{path}: line {n_lines}: missing origin_id")
                diags.append((n_lines, "missing origin_id"))
                continue
            if not o_bts:
                if strict:
                    raise DataError(f"{path}: line {n_lines}: missing origin_bts")
                diags.append((n_lines, "missing origin_bts"))
                continue
            day = None
            if len(ts) == 20 and ts[19] == "Z":
                base = cache_get(ts[:13])
                if base is not None:
                    mm = ts[14:16]
                    ss = ts[17:19]
                    if (
                        ts[13] == ":"
                        and ts[16] == ":"
                        and mm.isdigit()
                        and mm <= "59"
                        and ss.isdigit()
                        and ss <= "59"
                    ):
                        day = base
            if day is None:
                # Slow path: full validation, identical to parse_cdr_line.
                try:
                    dt = parse_timestamp(ts)
                except ValueError:
                    if strict:
                        raise DataError(f"{path}: line {n_lines}: bad timestamp") from None
                    diags.append((n_lines, "bad timestamp"))
                    continue
                day = (int(dt.timestamp()) + tz_off) // 86400
                if len(ts) == 20 and ts[19] == "Z":
                    # Day depends only on the date+hour prefix for
                    # whole-hour offsets, so the prefix keys the cache.
                    day_cache[ts[:13]] = day
            if not dur.isdigit():
                if strict:
                    raise DataError(f"{path}: line {n_lines}: bad duration")
                diags.append((n_lines, "bad duration"))
                continue
            if day_min is None or day < day_min:
                day_min = day
            if day_max is None or day > day_max:
                day_max = day
            key = (o_bts, day)
            s = sets_get(key)
            if s is None:
                s = sets[key] = set()
            s.add(o_id)
            if d_bts and d_id:
                key = (d_bts, day)
                s = sets_get(key)
                if s is None:
                    s = sets[key] = set()
                s.add(d_id)
    return sets, day_min, day_max, diags, n_lines


def activity_from_file(
    path: str,
    registry: Mapping[str, BtsSite],
    bucketing: DayBucketing,
    strict: bool = False,
    workers: int = 1,
) -> tuple[dict[str, ActivitySeries], list[Diagnostic]]:
    """Streaming parse + unique-phone aggregation over a CDR file.

    Equivalent to compute_activity(iter_cdr_file(path), ...) including
    diagnostics, but bounded in memory and optionally parallel over file
    chunks. Unlike compute_activity, towers outside the registry are
    aggregated too and dropped only at series assembly, which keeps the
    chunk workers registry-free; the observed day range comes from all
    well-formed records either way. Strict mode forces a single chunk so
    "fatal on first malformed line" keeps its file-order meaning.
    """
    try:
        size = os.path.getsize(path)
    except OSError as exc:
        raise DataError(f"cannot read CDR file {path}: {exc}") from exc
    workers = max(1, int(workers))
    if workers == 1 or strict or size < 1 << 20:
        chunks = [_aggregate_chunk(path, 0, size, bucketing.tz_offset_hours, strict)]
    else:
        bounds = [size * i // workers for i in range(workers + 1)]
        args = [
            (path, bounds[i], bounds[i + 1], bucketing.tz_offset_hours, strict)
            for i in range(workers)
        ]
        with Pool(workers) as pool:
            chunks = pool.starmap(_aggregate_chunk, args)

    merged: dict[tuple[str, int], set[str]] = {}
    day_min: int | None = None
    day_max: int | None = None
    diagnostics: list[Diagnostic] = []
    line_base = 0
    for sets, dmin, dmax, diags, n_lines in chunks:
        for key, phones in sets.items():
            tgt = merged.get(key)
            if tgt is None:
                merged[key] = phones
            else:
                tgt |= phones
        if dmin is not None and (day_min is None or dmin < day_min):
            day_min = dmin
        if dmax is not None and (day_max is None or dmax > day_max):
            day_max = dmax
        for rel, reason in diags:
            diagnostics.append(Diagnostic(line_base + rel, reason))
        line_base += n_lines
    if day_min is None or day_max is None:
        return {}, diagnostics
    counts = {k: len(v) for k, v in merged.items() if k[0] in registry}
    return _series_from_counts(counts, registry, day_min, day_max), diagnostics


# ---------------------------------------------------------------------------
# Baseline statistics and the variation metric


def baseline_stats(series: ActivitySeries, bl_window: tuple[int, int]) -> BaselineStats:
    """Mean and population standard deviation over the baseline window.

    The window is the complete reference population, hence the divide-by-n
    deviation; it must lie inside the series and span at least 2 days.
    """
    check_window(bl_window)
    n = bl_window[1] - bl_window[0] + 1
    if n < 2:
        raise DataError(f"{series.bts_id}: baseline window shorter than 2 days")
    values = series.slice_window(bl_window)
    mu = math.fsum(values) / n
    var = math.fsum((v - mu) ** 2 for v in values) / n
    sigma = math.sqrt(var)
    return BaselineStats(series.bts_id, mu, sigma, n, sigma == 0.0)


def zscore_series(
    series: ActivitySeries,
    stats: BaselineStats,
    z_max: float = DEFAULT_Z_MAX,
) -> ZScoreSeries:
    """z(t) = (x(t) - mu) / sigma, clamped to [-z_max, z_max].

    Degenerate towers (sigma == 0) get z = 0 where x equals mu and the
    clamp value elsewhere, with the degeneracy flagged on the output.
    """
    if stats.bts_id != series.bts_id:
        raise DataError(f"stats for {stats.bts_id} applied to series {series.bts_id}")
    if z_max <= 0:
        raise ValueError("z_max must be positive")
    z: list[float] = []
    if stats.degenerate:
        for x in series.values:
            if x == stats.mu:
                z.append(0.0)
            else:
                z.append(z_max if x > stats.mu else -z_max)
    else:
        for x in series.values:
            v = (x - stats.mu) / stats.sigma
            if v > z_max:
                v = z_max
            elif v < -z_max:
                v = -z_max
            z.append(v)
    return ZScoreSeries(series.bts_id, series.start_day, z, z_max, stats.degenerate)


def max_metric(zseries: ZScoreSeries, window: tuple[int, int]) -> tuple[float, int]:
    """Maximum z inside the window and the earliest day attaining it."""
    values = zseries.slice_window(window)
    best = values[0]
    best_day = window[0]
    for offset, v in enumerate(values):
        if v > best:
            best = v
            best_day = window[0] + offset
    return best, best_day


def exceedance_curve(
    per_tower_maxima: Mapping[str, float],
    thresholds: Iterable[float],
) -> list[tuple[float, float]]:
    """Percentage of towers whose maximum is >= each threshold."""
    if not per_tower_maxima:
        raise DataError("exceedance curve needs at least one tower maximum")
    maxima = sorted(per_tower_maxima.values())
    n = len(maxima)
    curve: list[tuple[float, float]] = []
    for v in thresholds:
        count = n - bisect.bisect_left(maxima, v)
        curve.append((v, 100.0 * count / n))
    return curve


def top_k_hot(per_tower_maxima: Mapping[str, float], k: int) -> list[str]:
    """Towers ranked by maximum metric, descending; ties by id ascending."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(per_tower_maxima.items(), key=lambda item: (-item[1], item[0]))
    return [bts_id for bts_id, _ in ranked[:k]]


# ---------------------------------------------------------------------------
# CSV export / import


def export_series_csv(series_map: Mapping[str, ActivitySeries], path: str) -> None:
    """Write `bts_id,day_iso,value` rows, zeros explicit, sorted."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("bts_id,day_iso,value\n")
        for bts_id in sorted(series_map):
            s = series_map[bts_id]
            for offset, v in enumerate(s.values):
                f.write(f"{bts_id},{day_iso(s.start_day + offset)},{v}\n")


def export_zscore_csv(zmap: Mapping[str, ZScoreSeries], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("bts_id,day_iso,value\n")
        for bts_id in sorted(zmap):
            s = zmap[bts_id]
            for offset, v in enumerate(s.z):
                f.write(f"{bts_id},{day_iso(s.start_day + offset)},{v:.6f}\n")


def export_baseline_csv(stats_map: Mapping[str, BaselineStats], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("bts_id,mu,sigma,n_days,degenerate\n")
        for bts_id in sorted(stats_map):
            st = stats_map[bts_id]
            f.write(f"{bts_id},{st.mu!r},{st.sigma!r},{st.n_days},{int(st.degenerate)}\n")


def export_exceedance_csv(curve: list[tuple[float, float]], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("threshold,percent\n")
        for v, pct in curve:
            f.write(f"{v:.6f},{pct:.6f}\n")


def _load_day_value_csv(path: str) -> dict[str, tuple[int, list[float]]]:
    out: dict[str, tuple[int, list[float]]] = {}
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read series file {path}: {exc}") from exc
    with f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line or line.startswith("#") or line == "bts_id,day_iso,value":
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DataError(f"{path}: line {line_no}: bad field count")
            bts_id, iso, value = parts
            try:
                day = parse_day(iso)
                x = float(value)
            except ValueError:
                raise DataError(f"{path}: line {line_no}: bad value") from None
            if bts_id not in out:
                out[bts_id] = (day, [x])
            else:
                start, values = out[bts_id]
                if day != start + len(values):
                    raise DataError(
                        f"{path}: line {line_no}: non-contiguous days for {bts_id}"
                    )
                values.append(x)
    return out


def load_activity_csv(path: str) -> dict[str, ActivitySeries]:
    raw = _load_day_value_csv(path)
    out: dict[str, ActivitySeries] = {}
    for bts_id, (start, values) in sorted(raw.items()):
        ints = []
        for v in values:
            i = int(v)
            if i != v or i < 0:
                raise DataError(f"{path}: non-negative integer expected for {bts_id}")
            ints.append(i)
        out[bts_id] = ActivitySeries(bts_id, start, ints)
    return out


def load_zscore_csv(path: str, z_max: float = DEFAULT_Z_MAX) -> dict[str, ZScoreSeries]:
    raw = _load_day_value_csv(path)
    return {
        bts_id: ZScoreSeries(bts_id, start, values, z_max)
        for bts_id, (start, values) in sorted(raw.items())
    }
