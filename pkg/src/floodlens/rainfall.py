"""Gridded precipitation: frame stacks, accumulation, tower sampling, lag.

A rain grid is an ordered stack of equally-spaced frames over one grid
geometry (0.25 degree / 3-hourly by default, TRMM-like). Each frame
covers [instant, instant + step). On disk a grid is an index CSV
`frame_instant_iso,path` plus one ASCII-grid file per frame, paths
relative to the index.

Sampling at a tower uses the nearest cell centre, no interpolation;
frames are summed into local days consistent with the activity day
bucketing, so total precipitation is conserved exactly.
"""

from __future__ import annotations

import os
import statistics
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Mapping, Sequence

import numpy as np

from .activity import ZScoreSeries
from .cdr import BtsSite, format_timestamp, parse_timestamp
from .errors import DataError
from .raster import GridGeometry, Raster, read_ascii_grid, write_ascii_grid
from .timebase import DayBucketing, check_window


@dataclass(frozen=True)
class RainGrid:
    geometry: GridGeometry
    instants: tuple[datetime, ...]
    frames: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if not self.frames:
            raise DataError("rain grid with no frames")
        if len(self.instants) != len(self.frames):
            raise DataError("rain grid: instants and frames differ in length")
        shape = (self.geometry.nrows, self.geometry.ncols)
        for frame in self.frames:
            if frame.shape != shape:
                raise DataError("rain grid: frame shape mismatch")
        if len(self.instants) > 1:
            step = self.instants[1] - self.instants[0]
            if step <= timedelta(0):
                raise DataError("rain grid: instants must be strictly increasing")
            for a, b in zip(self.instants, self.instants[1:]):
                if b - a != step:
                    raise DataError("rain grid: frames not uniformly spaced")

    @property
    def step(self) -> timedelta:
        if len(self.instants) > 1:
            return self.instants[1] - self.instants[0]
        return timedelta(hours=3)

    @property
    def timestep_hours(self) -> float:
        return self.step.total_seconds() / 3600.0


@dataclass(frozen=True)
class RainSeries:
    """Daily precipitation sampled at one tower."""

    bts_id: str
    start_day: int
    daily_mm: list[float]
    clamped: bool = False  # site fell outside the grid extent

    @property
    def end_day(self) -> int:
        return self.start_day + len(self.daily_mm) - 1

    def covers(self, window: tuple[int, int]) -> bool:
        return self.start_day <= window[0] and window[1] <= self.end_day

    def slice_window(self, window: tuple[int, int]) -> list[float]:
        check_window(window)
        if not self.covers(window):
            raise DataError(
                f"{self.bts_id}: window {window} outside rain series "
                f"[{self.start_day}, {self.end_day}]"
            )
        lo = window[0] - self.start_day
        return self.daily_mm[lo : lo + window[1] - window[0] + 1]


def load_rain_grid(index_path: str) -> RainGrid:
    try:
        f = open(index_path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read rain index {index_path}: {exc}") from exc
    base = os.path.dirname(os.path.abspath(index_path))
    entries: list[tuple[datetime, str]] = []
    with f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line or line.startswith("#") or line == "frame_instant_iso,path":
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DataError(f"{index_path}: line {line_no}: bad field count")
            try:
                instant = parse_timestamp(parts[0])
            except ValueError:
                raise DataError(f"{index_path}: line {line_no}: bad instant") from None
            entries.append((instant, os.path.join(base, parts[1])))
    if not entries:
        raise DataError(f"{index_path}: no frames listed")
    frames = []
    geometry: GridGeometry | None = None
    for instant, path in entries:
        raster = read_ascii_grid(path)
        if geometry is None:
            geometry = raster.geometry
        elif raster.geometry != geometry:
            raise DataError(f"{path}: frame geometry differs from the first frame")
        frames.append(raster.values)
    assert geometry is not None
    return RainGrid(geometry, tuple(i for i, _ in entries), tuple(frames))


def save_rain_grid(grid: RainGrid, index_path: str) -> None:
    base = os.path.dirname(os.path.abspath(index_path))
    os.makedirs(base, exist_ok=True)
    with open(index_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("frame_instant_iso,path\n")
        for i, (instant, frame) in enumerate(zip(grid.instants, grid.frames)):
            name = f"frame_{i:05d}.asc"
            write_ascii_grid(Raster(grid.geometry, frame), os.path.join(base, name))
            f.write(f"{format_timestamp(instant)},{name}\n")


def accumulate(grid: RainGrid, start: datetime, end: datetime) -> np.ndarray:
    """Cellwise sum of frames intersecting [start, end).

    Frame k covers [instant_k, instant_k + step); an empty intersection
    is fatal.
    """
    if end <= start:
        raise DataError(f"accumulate: empty window {start}..{end}")
    step = grid.step
    total = np.zeros((grid.geometry.nrows, grid.geometry.ncols))
    hit = False
    for instant, frame in zip(grid.instants, grid.frames):
        if instant < end and instant + step > start:
            total += frame
            hit = True
    if not hit:
        raise DataError(f"accumulate: window {start}..{end} outside frame range")
    return total


def sample_at_site(grid: RainGrid, site: BtsSite, bucketing: DayBucketing) -> RainSeries:
    """Daily precipitation at the tower's nearest cell centre.

    Sites outside the grid extent are clamped to the nearest edge cell
    and flagged. Each frame contributes to the local day containing its
    start instant, so sum(daily_mm) equals the sum of sampled frames.
    """
    (row, col), clamped = grid.geometry.nearest_cell(site.lat, site.lon)
    days = [bucketing.day_of(t) for t in grid.instants]
    lo, hi = min(days), max(days)
    daily = [0.0] * (hi - lo + 1)
    for day, frame in zip(days, grid.frames):
        daily[day - lo] += float(frame[row, col])
    return RainSeries(site.bts_id, lo, daily, clamped)


def peak_lag(
    zseries: ZScoreSeries,
    rain: RainSeries,
    event_window: tuple[int, int],
) -> int:
    """argmax-day(z) - argmax-day(rain) inside the window, earliest ties."""
    z_values = zseries.slice_window(event_window)
    r_values = rain.slice_window(event_window)
    z_day = event_window[0] + _argmax_first(z_values)
    r_day = event_window[0] + _argmax_first(r_values)
    return z_day - r_day


def _argmax_first(values: Sequence[float]) -> int:
    best, best_i = values[0], 0
    for i, v in enumerate(values):
        if v > best:
            best, best_i = v, i
    return best_i


@dataclass(frozen=True)
class LagReport:
    per_tower: dict[str, int]
    median_lag: float
    towers: list[str]


def lag_report(
    zmap: Mapping[str, ZScoreSeries],
    rain_map: Mapping[str, RainSeries],
    event_window: tuple[int, int],
    towers: Sequence[str],
) -> LagReport:
    """Per-tower rainfall-to-anomaly lag plus its median over the set."""
    if not towers:
        raise DataError("lag report needs at least one tower")
    per_tower: dict[str, int] = {}
    for bts_id in towers:
        if bts_id not in zmap:
            raise DataError(f"lag report: no z-score series for {bts_id}")
        if bts_id not in rain_map:
            raise DataError(f"lag report: no rain series for {bts_id}")
        per_tower[bts_id] = peak_lag(zmap[bts_id], rain_map[bts_id], event_window)
    return LagReport(per_tower, float(statistics.median(per_tower.values())), list(towers))


def export_rain_series_csv(series_map: Mapping[str, RainSeries], path: str) -> None:
    from .timebase import day_iso

    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("bts_id,day_iso,mm\n")
        for bts_id in sorted(series_map):
            s = series_map[bts_id]
            for offset, v in enumerate(s.daily_mm):
                f.write(f"{bts_id},{day_iso(s.start_day + offset)},{v:.6f}\n")


def load_rain_series_csv(path: str) -> dict[str, RainSeries]:
    from .timebase import parse_day

    out: dict[str, tuple[int, list[float]]] = {}
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read rain series {path}: {exc}") from exc
    with f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line or line.startswith("#") or line == "bts_id,day_iso,mm":
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DataError(f"{path}: line {line_no}: bad field count")
            try:
                day = parse_day(parts[1])
                mm = float(parts[2])
            except ValueError:
                raise DataError(f"{path}: line {line_no}: bad value") from None
            if parts[0] not in out:
                out[parts[0]] = (day, [mm])
            else:
                start, values = out[parts[0]]
                if day != start + len(values):
                    raise DataError(f"{path}: line {line_no}: non-contiguous days")
                values.append(mm)
    return {
        bts_id: RainSeries(bts_id, start, values)
        for bts_id, (start, values) in sorted(out.items())
    }
