"""Impact map assembly and export.

Fuses, per tower: the maximum variation metric over the event window and
its day, proximity to the flood segmentation, the administrative region,
and official affected-population/camp counts joined by region. Exports a
GeoJSON FeatureCollection (optionally with Voronoi cell polygons) and
per-day time-lapse frames of |z|.

All numeric output is fixed at 6 decimals so repeated runs are
byte-identical regardless of platform or worker count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping

from .activity import ZScoreSeries, max_metric
from .cdr import BtsSite
from .errors import DataError
from .geo import RegionPolygon, VoronoiDiagram, near_flood, region_of
from .raster import FloodMask
from .timebase import check_window, day_iso, parse_day


@dataclass(frozen=True)
class ImpactRecord:
    bts_id: str
    lat: float
    lon: float
    max_z: float | None
    day_of_max: int | None
    in_flood: bool
    region_id: str | None
    affected_population: int | None
    camps: int | None

    @property
    def missing_metric(self) -> bool:
        return self.max_z is None


@dataclass(frozen=True)
class ImpactMapResult:
    records: list[ImpactRecord]
    unmatched_regions: list[str]  # affected-table rows naming no known region


def shared_peak_day(
    zmap: Mapping[str, ZScoreSeries],
    event_window: tuple[int, int],
    threshold: float,
) -> int:
    """Day maximising the count of towers with z >= threshold (earliest tie)."""
    check_window(event_window)
    best_day = event_window[0]
    best_count = -1
    for day in range(event_window[0], event_window[1] + 1):
        count = 0
        for series in zmap.values():
            if series.covers((day, day)) and series.z[day - series.start_day] >= threshold:
                count += 1
        if count > best_count:
            best_count = count
            best_day = day
    return best_day


def build_impact_map(
    zmap: Mapping[str, ZScoreSeries],
    registry: Mapping[str, BtsSite],
    flood_mask: FloodMask | None,
    regions: Mapping[str, RegionPolygon],
    affected_table: Mapping[str, tuple[int, int]],
    event_window: tuple[int, int],
    d_max_m: float = 5000.0,
    shared_day_threshold: float | None = None,
) -> ImpactMapResult:
    """One fused record per registry tower.

    Towers without a z-score series get a flagged null metric rather than
    being dropped. With shared_day_threshold set, the map shows every
    tower's z on the single most critical day (the day the most towers
    exceed the threshold) instead of per-tower argmax days.
    """
    check_window(event_window)
    shared_day: int | None = None
    if shared_day_threshold is not None:
        if not zmap:
            raise DataError("shared-day impact map needs z-score series")
        shared_day = shared_peak_day(zmap, event_window, shared_day_threshold)
    records: list[ImpactRecord] = []
    for bts_id in sorted(registry):
        site = registry[bts_id]
        series = zmap.get(bts_id)
        max_z: float | None = None
        day_of_max: int | None = None
        if series is not None:
            if shared_day is not None:
                if series.covers((shared_day, shared_day)):
                    max_z = series.z[shared_day - series.start_day]
                    day_of_max = shared_day
            else:
                max_z, day_of_max = max_metric(series, event_window)
        in_flood = (
            near_flood(site, flood_mask, d_max_m) if flood_mask is not None else False
        )
        region_id = region_of((site.lat, site.lon), regions)
        affected = camps = None
        if region_id is not None and region_id in affected_table:
            affected, camps = affected_table[region_id]
        records.append(
            ImpactRecord(
                bts_id,
                site.lat,
                site.lon,
                max_z,
                day_of_max,
                in_flood,
                region_id,
                affected,
                camps,
            )
        )
    unmatched = sorted(set(affected_table) - set(regions))
    return ImpactMapResult(records, unmatched)


# ---------------------------------------------------------------------------
# Affected-population table (civil-protection records)


def load_affected_csv(path: str) -> dict[str, tuple[int, int]]:
    """CSV `region_id,affected_population,camps`."""
    out: dict[str, tuple[int, int]] = {}
    try:
        f = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read affected table {path}: {exc}") from exc
    with f:
        for line_no, raw in enumerate(f, start=1):
            line = raw.rstrip("\r\n")
            if not line or line.startswith("#") or line == "region_id,affected_population,camps":
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DataError(f"{path}: line {line_no}: bad field count")
            region_id, pop, camps = parts
            if not pop.isdigit() or not camps.isdigit():
                raise DataError(f"{path}: line {line_no}: bad counts")
            if region_id in out:
                raise DataError(f"{path}: line {line_no}: duplicate region {region_id!r}")
            out[region_id] = (int(pop), int(camps))
    return out


def export_affected_csv(table: Mapping[str, tuple[int, int]], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("region_id,affected_population,camps\n")
        for region_id in sorted(table):
            pop, camps = table[region_id]
            f.write(f"{region_id},{pop},{camps}\n")


# ---------------------------------------------------------------------------
# GeoJSON export


def _round6(x: float) -> float:
    return round(float(x), 6)


def impact_geojson(
    records: Iterable[ImpactRecord],
    cells: VoronoiDiagram | None = None,
) -> dict:
    records = sorted(records, key=lambda r: r.bts_id)
    if not records:
        raise DataError("impact export needs at least one record")
    features = []
    for rec in records:
        features.append(
            {
                "type": "Feature",
                "properties": {
                    "bts_id": rec.bts_id,
                    "max_z": None if rec.max_z is None else _round6(rec.max_z),
                    "day_of_max": rec.day_of_max,
                    "day_of_max_iso": None
                    if rec.day_of_max is None
                    else day_iso(rec.day_of_max),
                    "in_flood": rec.in_flood,
                    "region_id": rec.region_id,
                    "affected_population": rec.affected_population,
                    "camps": rec.camps,
                    "missing_metric": rec.missing_metric,
                },
                "geometry": {
                    "type": "Point",
                    "coordinates": [_round6(rec.lon), _round6(rec.lat)],
                },
            }
        )
    if cells is not None:
        for bts_id in sorted(cells.cells):
            cell = cells.cells[bts_id]
            ring = [cells.projection.inverse(u, v) for u, v in cell.vertices]
            if ring:
                ring.append(ring[0])
            features.append(
                {
                    "type": "Feature",
                    "properties": {"bts_id": bts_id, "kind": "voronoi_cell"},
                    "geometry": {
                        "type": "Polygon",
                        "coordinates": [
                            [[_round6(lon), _round6(lat)] for lat, lon in ring]
                        ],
                    },
                }
            )
    return {"type": "FeatureCollection", "features": features}


def export_impact_geojson(
    records: Iterable[ImpactRecord],
    path: str,
    cells: VoronoiDiagram | None = None,
) -> None:
    doc = impact_geojson(records, cells)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, sort_keys=True, separators=(",", ":"))
        f.write("\n")


def load_impact_geojson(path: str) -> list[ImpactRecord]:
    """Re-read point features written by export_impact_geojson."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        raise DataError(f"cannot read impact file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    records = []
    for feature in doc.get("features", []):
        if feature.get("geometry", {}).get("type") != "Point":
            continue
        props = feature["properties"]
        lon, lat = feature["geometry"]["coordinates"]
        records.append(
            ImpactRecord(
                props["bts_id"],
                lat,
                lon,
                props["max_z"],
                props["day_of_max"],
                props["in_flood"],
                props["region_id"],
                props["affected_population"],
                props["camps"],
            )
        )
    return records


# ---------------------------------------------------------------------------
# Time-lapse frames


def export_timelapse(
    zmap: Mapping[str, ZScoreSeries],
    day_range: tuple[int, int],
    out_dir: str,
) -> list[str]:
    """One CSV per day of |z| per tower (the time-lapse convention).

    Every series must cover the requested range. Returns the written
    paths in day order.
    """
    import os

    check_window(day_range)
    for series in zmap.values():
        if not series.covers(day_range):
            raise DataError(
                f"{series.bts_id}: series does not cover time-lapse range {day_range}"
            )
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for day in range(day_range[0], day_range[1] + 1):
        path = os.path.join(out_dir, f"day_{day_iso(day)}.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write("bts_id,abs_z\n")
            for bts_id in sorted(zmap):
                series = zmap[bts_id]
                value = abs(series.z[day - series.start_day])
                f.write(f"{bts_id},{value:.6f}\n")
        paths.append(path)
    return paths
