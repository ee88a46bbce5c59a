"""Home antenna tower (HAT) assignment and census representativeness.

Each phone's HAT is the tower it used most at night during the baseline
window (a residence proxy); origin events credit the origin tower and
received events the destination tower when one was logged. Per-region
phone counts come from locating HAT sites in administrative polygons,
and an ordinary least-squares fit of census against CDR counts measures
how well the subscriber base represents the population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping

from .cdr import BtsSite, CdrRecord
from .errors import DataError
from .geo import RegionPolygon, region_of
from .timebase import DayBucketing, check_window

UNASSIGNED_REGION = "__unassigned__"

DEFAULT_NIGHT_WINDOW = (20, 6)  # 20:00 through 06:59 local


def _in_night_window(hour: int, window: tuple[int, int]) -> bool:
    start, end = window
    if start <= end:
        return start <= hour <= end
    return hour >= start or hour <= end


@dataclass(frozen=True)
class HatAssignment:
    """phone -> home tower map plus the windows that produced it."""

    assignments: dict[str, str]
    night_window: tuple[int, int]
    bl_window: tuple[int, int]

    def __len__(self) -> int:
        return len(self.assignments)


@dataclass(frozen=True)
class RegionPopulation:
    region_id: str
    cdr_count: int
    census_count: int | None = None


def assign_hat(
    records: Iterable[CdrRecord],
    night_window: tuple[int, int],
    bl_window: tuple[int, int],
    bucketing: DayBucketing,
) -> HatAssignment:
    """Most-used tower at night during the baseline window, per phone.

    Ties break to the lexicographically smallest tower id; phones with
    no night event in the window are omitted.
    """
    check_window(bl_window)
    counts: dict[str, dict[str, int]] = {}
    for rec in records:
        day = bucketing.day_of(rec.timestamp)
        if not bl_window[0] <= day <= bl_window[1]:
            continue
        if not _in_night_window(bucketing.hour_of(rec.timestamp), night_window):
            continue
        towers = counts.setdefault(rec.origin_id, {})
        towers[rec.origin_bts] = towers.get(rec.origin_bts, 0) + 1
        if rec.dest_bts and rec.dest_id:
            towers = counts.setdefault(rec.dest_id, {})
            towers[rec.dest_bts] = towers.get(rec.dest_bts, 0) + 1
    assignments = {
        phone: min(towers.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        for phone, towers in counts.items()
    }
    return HatAssignment(assignments, night_window, bl_window)


def estimate_population(
    hat: HatAssignment,
    registry: Mapping[str, BtsSite],
    regions: Mapping[str, RegionPolygon],
) -> list[RegionPopulation]:
    """Phones per region by locating each HAT site in the region polygons.

    Sites inside no polygon land in the reserved '__unassigned__' bucket;
    every region appears in the output even with zero phones. A HAT tower
    missing from the registry is fatal (the registry must cover the study
    area the HAT map was built from).
    """
    region_cache: dict[str, str] = {}
    tally: dict[str, int] = {region_id: 0 for region_id in regions}
    tally[UNASSIGNED_REGION] = 0
    for phone, bts_id in hat.assignments.items():
        site = registry.get(bts_id)
        if site is None:
            raise DataError(f"HAT tower {bts_id!r} missing from the registry")
        region = region_cache.get(bts_id)
        if region is None:
            region = region_of((site.lat, site.lon), regions) or UNASSIGNED_REGION
            region_cache[bts_id] = region
        tally[region] += 1
    return [
        RegionPopulation(region_id, tally[region_id]) for region_id in sorted(tally)
    ]


def join_census(
    pops: Iterable[RegionPopulation], census: Mapping[str, int]
) -> list[RegionPopulation]:
    return [
        RegionPopulation(p.region_id, p.cdr_count, census.get(p.region_id))
        for p in pops
    ]


@dataclass(frozen=True)
class CensusComparison:
    slope: float
    intercept: float
    r_squared: float
    per_region_ratio: dict[str, float]
    ratio_cv: float
    n_regions: int


def compare_census(region_pops: Iterable[RegionPopulation]) -> CensusComparison:
    """OLS fit census = slope * cdr + intercept, plus penetration spread.

    r_squared is the squared Pearson correlation; per-region ratio is
    cdr/census and ratio_cv its coefficient of variation (population
    standard deviation over mean), the homogeneity figure. Needs at
    least 3 regions carrying both counts with positive census.
    """
    usable = [
        p
        for p in region_pops
        if p.region_id != UNASSIGNED_REGION and p.census_count is not None
    ]
    for p in usable:
        if p.census_count <= 0:
            raise DataError(f"region {p.region_id}: census count must be positive")
    if len(usable) < 3:
        raise DataError(f"census comparison needs >= 3 usable regions, got {len(usable)}")
    xs = [float(p.cdr_count) for p in usable]
    ys = [float(p.census_count) for p in usable]
    n = len(usable)
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    sxx = math.fsum((x - mx) ** 2 for x in xs)
    syy = math.fsum((y - my) ** 2 for y in ys)
    sxy = math.fsum((x - mx) * (y - my) for x, y in zip(xs, ys))
    if sxx == 0.0:
        raise DataError("census comparison: zero variance in CDR counts")
    if syy == 0.0:
        raise DataError("census comparison: zero variance in census counts")
    slope = sxy / sxx
    intercept = my - slope * mx
    r_squared = (sxy * sxy) / (sxx * syy)
    ratios = {p.region_id: p.cdr_count / p.census_count for p in usable}
    mean_ratio = math.fsum(ratios.values()) / n
    var_ratio = math.fsum((r - mean_ratio) ** 2 for r in ratios.values()) / n
    ratio_cv = math.sqrt(var_ratio) / mean_ratio if mean_ratio > 0 else math.inf
    return CensusComparison(slope, intercept, r_squared, ratios, ratio_cv, n)


# ---------------------------------------------------------------------------
# CSV interfaces


def load_census_csv(path: str) -> dict[str, int]:
    """Census CSV `region_id,population`."""
    out: dict[str, int] = {}
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read census file {path}: {exc}") from exc
    with f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line or line.startswith("#") or line == "region_id,population":
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DataError(f"{path}: line {line_no}: bad field count")
            region_id, pop = parts
            if not pop.isdigit():
                raise DataError(f"{path}: line {line_no}: bad population")
            if region_id in out:
                raise DataError(f"{path}: line {line_no}: duplicate region {region_id!r}")
            out[region_id] = int(pop)
    return out


def export_census_csv(census: Mapping[str, int], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("region_id,population\n")
        for region_id in sorted(census):
            f.write(f"{region_id},{census[region_id]}\n")


def export_hat_csv(hat: HatAssignment, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("phone_id,bts_id\n")
        for phone in sorted(hat.assignments):
            f.write(f"{phone},{hat.assignments[phone]}\n")


def load_hat_csv(
    path: str,
    night_window: tuple[int, int] = DEFAULT_NIGHT_WINDOW,
    bl_window: tuple[int, int] = (0, 0),
) -> HatAssignment:
    assignments: dict[str, str] = {}
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read HAT file {path}: {exc}") from exc
    with f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line or line.startswith("#") or line == "phone_id,bts_id":
                continue
            parts = line.split(",")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise DataError(f"{path}: line {line_no}: bad HAT row")
            assignments[parts[0]] = parts[1]
    return HatAssignment(assignments, night_window, bl_window)


def export_region_population_csv(pops: Iterable[RegionPopulation], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("region_id,cdr_count,census_count,ratio\n")
        for p in sorted(pops, key=lambda p: p.region_id):
            census = "" if p.census_count is None else str(p.census_count)
            ratio = (
                ""
                if not p.census_count
                else f"{p.cdr_count / p.census_count:.6f}"
            )
            f.write(f"{p.region_id},{p.cdr_count},{census},{ratio}\n")
