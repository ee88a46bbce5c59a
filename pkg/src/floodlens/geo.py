"""Geometry kernel: great-circle distance, tower cells, region membership,
flood proximity.

Tower cells are Voronoi regions under great-circle distance. On the unit
sphere the boundary between two sites a, b is the plane x.(a-b) = 0
through the origin; a gnomonic projection (plane tangent at a centre c)
maps such planes to straight lines, so each cell is an intersection of
half-planes in projected coordinates and polygon membership agrees with
nearest_site exactly rather than approximately. The lat/lon clip box is
densified before projection because parallels do not project to straight
lines.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cdr import BBox, BtsSite
from .errors import DataError

EARTH_RADIUS_M = 6_371_008.8

Vec3 = tuple[float, float, float]
Point = tuple[float, float]  # (lat, lon) degrees


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in metres."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def haversine_m_many(lat: float, lon: float, lats: np.ndarray, lons: np.ndarray) -> np.ndarray:
    """Vectorised haversine from one point to many."""
    phi1 = math.radians(lat)
    phi2 = np.radians(lats)
    dphi = phi2 - phi1
    dlam = np.radians(lons - lon)
    a = np.sin(dphi / 2) ** 2 + math.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(a)))


def unit_vector(lat: float, lon: float) -> Vec3:
    phi, lam = math.radians(lat), math.radians(lon)
    return (math.cos(phi) * math.cos(lam), math.cos(phi) * math.sin(lam), math.sin(phi))


def nearest_site(point: Point, registry: Mapping[str, BtsSite]) -> str:
    """Registry site minimising great-circle distance; ties break to the
    lexicographically smallest bts_id."""
    if not registry:
        raise DataError("nearest_site: empty registry")
    lat, lon = point
    best_id: str | None = None
    best_d = math.inf
    for bts_id in sorted(registry):
        site = registry[bts_id]
        d = haversine_m(lat, lon, site.lat, site.lon)
        if d < best_d:
            best_d = d
            best_id = bts_id
    assert best_id is not None
    return best_id


class GnomonicProjection:
    """Local planar projection tangent at (lat0, lon0).

    Great circles map to straight lines, which is what makes the Voronoi
    half-plane construction exact. Valid within the hemisphere around
    the centre; fine for any regional study area.
    """

    def __init__(self, lat0: float, lon0: float):
        self.lat0 = lat0
        self.lon0 = lon0
        phi, lam = math.radians(lat0), math.radians(lon0)
        self.center: Vec3 = (
            math.cos(phi) * math.cos(lam),
            math.cos(phi) * math.sin(lam),
            math.sin(phi),
        )
        self.east: Vec3 = (-math.sin(lam), math.cos(lam), 0.0)
        self.north: Vec3 = (
            -math.sin(phi) * math.cos(lam),
            -math.sin(phi) * math.sin(lam),
            math.cos(phi),
        )

    @classmethod
    def centered_on(cls, points: Iterable[Point]) -> "GnomonicProjection":
        xs = ys = zs = 0.0
        n = 0
        for lat, lon in points:
            x, y, z = unit_vector(lat, lon)
            xs += x
            ys += y
            zs += z
            n += 1
        if n == 0:
            raise DataError("projection centre needs at least one point")
        norm = math.sqrt(xs * xs + ys * ys + zs * zs)
        if norm < 1e-12:
            raise DataError("degenerate point set: no spherical centroid")
        lat0 = math.degrees(math.asin(zs / norm))
        lon0 = math.degrees(math.atan2(ys, xs))
        return cls(lat0, lon0)

    def forward(self, lat: float, lon: float) -> Point:
        d = unit_vector(lat, lon)
        c, e1, e2 = self.center, self.east, self.north
        w = d[0] * c[0] + d[1] * c[1] + d[2] * c[2]
        if w <= 1e-9:
            raise ValueError(f"point ({lat}, {lon}) outside projection hemisphere")
        u = (d[0] * e1[0] + d[1] * e1[1] + d[2] * e1[2]) / w
        v = (d[0] * e2[0] + d[1] * e2[1] + d[2] * e2[2]) / w
        return u, v

    def inverse(self, u: float, v: float) -> Point:
        c, e1, e2 = self.center, self.east, self.north
        x = c[0] + u * e1[0] + v * e2[0]
        y = c[1] + u * e1[1] + v * e2[1]
        z = c[2] + u * e1[2] + v * e2[2]
        norm = math.sqrt(x * x + y * y + z * z)
        return math.degrees(math.asin(z / norm)), math.degrees(math.atan2(y, x))

    def bisector_halfplane(self, a: Vec3, b: Vec3) -> tuple[float, float, float]:
        """Coefficients (k0, ku, kv) such that k0 + ku*u + kv*v >= 0 iff the
        projected point is at least as close (great-circle) to a as to b."""
        n = (a[0] - b[0], a[1] - b[1], a[2] - b[2])
        c, e1, e2 = self.center, self.east, self.north
        return (
            c[0] * n[0] + c[1] * n[1] + c[2] * n[2],
            e1[0] * n[0] + e1[1] * n[1] + e1[2] * n[2],
            e2[0] * n[0] + e2[1] * n[1] + e2[2] * n[2],
        )


def _clip_halfplane(
    poly: list[Point], k0: float, ku: float, kv: float
) -> list[Point]:
    """Sutherland-Hodgman clip of a polygon against k0 + ku*u + kv*v >= 0."""
    out: list[Point] = []
    n = len(poly)
    for i in range(n):
        pu, pv = poly[i]
        qu, qv = poly[(i + 1) % n]
        fp = k0 + ku * pu + kv * pv
        fq = k0 + ku * qu + kv * qv
        if fp >= 0.0:
            out.append((pu, pv))
            if fq < 0.0:
                t = fp / (fp - fq)
                out.append((pu + t * (qu - pu), pv + t * (qv - pv)))
        elif fq >= 0.0:
            t = fp / (fp - fq)
            out.append((pu + t * (qu - pu), pv + t * (qv - pv)))
    return out


@dataclass(frozen=True)
class VoronoiCell:
    """One tower's cell; vertices in the diagram's planar projection."""

    bts_id: str
    vertices: list[Point]


@dataclass(frozen=True)
class VoronoiDiagram:
    projection: GnomonicProjection
    clip_box: BBox
    cells: dict[str, VoronoiCell]
    merged_duplicates: dict[str, str]  # dropped id -> kept id

    def cell_containing(self, lat: float, lon: float) -> str | None:
        """Cell whose polygon contains the point; boundary-inclusive,
        smallest id wins on shared boundaries; None outside the clip box."""
        u, v = self.projection.forward(lat, lon)
        for bts_id in sorted(self.cells):
            if _planar_point_in_ring(u, v, self.cells[bts_id].vertices):
                return bts_id
        return None


def _box_boundary(box: BBox, per_edge: int = 16) -> list[Point]:
    """Densified counter-clockwise boundary of a lat/lon box."""
    pts: list[Point] = []
    lat_lo, lat_hi = box.lat_min, box.lat_max
    lon_lo, lon_hi = box.lon_min, box.lon_max
    for i in range(per_edge):
        pts.append((lat_lo, lon_lo + (lon_hi - lon_lo) * i / per_edge))
    for i in range(per_edge):
        pts.append((lat_lo + (lat_hi - lat_lo) * i / per_edge, lon_hi))
    for i in range(per_edge):
        pts.append((lat_hi, lon_hi - (lon_hi - lon_lo) * i / per_edge))
    for i in range(per_edge):
        pts.append((lat_hi - (lat_hi - lat_lo) * i / per_edge, lon_lo))
    return pts


def voronoi_cells(
    registry: Mapping[str, BtsSite],
    clip_box: BBox,
    projection: GnomonicProjection | None = None,
) -> VoronoiDiagram:
    """Great-circle Voronoi cells of the registry, clipped to the box.

    Sites sharing identical coordinates are merged under the smallest id
    (recorded in merged_duplicates). Every site must lie inside the box.
    """
    if not registry:
        raise DataError("voronoi_cells: empty registry")
    merged: dict[str, str] = {}
    by_coord: dict[Point, str] = {}
    for bts_id in sorted(registry):
        site = registry[bts_id]
        if not clip_box.contains(site.lat, site.lon):
            raise DataError(f"site {bts_id} outside the clip box")
        coord = (site.lat, site.lon)
        keeper = by_coord.get(coord)
        if keeper is None:
            by_coord[coord] = bts_id
        else:
            merged[bts_id] = keeper
    sites = {bts_id: coord for coord, bts_id in by_coord.items()}
    if projection is None:
        projection = GnomonicProjection.centered_on(sites.values())
    base = [projection.forward(lat, lon) for lat, lon in _box_boundary(clip_box)]
    vectors = {bts_id: unit_vector(*coord) for bts_id, coord in sites.items()}
    cells: dict[str, VoronoiCell] = {}
    for bts_id in sorted(sites):
        poly = base
        a = vectors[bts_id]
        for other, b in vectors.items():
            if other == bts_id:
                continue
            poly = _clip_halfplane(poly, *projection.bisector_halfplane(a, b))
            if not poly:
                break
        cells[bts_id] = VoronoiCell(bts_id, poly)
    return VoronoiDiagram(projection, clip_box, cells, merged)


# ---------------------------------------------------------------------------
# Region polygons (administrative boundaries)


@dataclass(frozen=True)
class RegionPolygon:
    """Administrative region: one outer ring plus optional holes.

    Rings are closed (first vertex repeated last) lists of (lat, lon).
    """

    region_id: str
    name: str
    rings: tuple[tuple[Point, ...], ...]

    def __post_init__(self) -> None:
        if not self.rings:
            raise DataError(f"region {self.region_id}: no rings")
        for ring in self.rings:
            if len(ring) < 4:
                raise DataError(f"region {self.region_id}: ring with < 4 vertices")
            if ring[0] != ring[-1]:
                raise DataError(f"region {self.region_id}: ring not closed")
            for lat, lon in ring:
                if not (math.isfinite(lat) and math.isfinite(lon)):
                    raise DataError(f"region {self.region_id}: non-finite vertex")

    @classmethod
    def rectangle(cls, region_id: str, box: BBox, name: str = "") -> "RegionPolygon":
        ring = (
            (box.lat_min, box.lon_min),
            (box.lat_min, box.lon_max),
            (box.lat_max, box.lon_max),
            (box.lat_max, box.lon_min),
            (box.lat_min, box.lon_min),
        )
        return cls(region_id, name or region_id, (ring,))


def _planar_point_in_ring(x: float, y: float, ring: Sequence[Point]) -> bool:
    """Even-odd crossing test in the plane, boundary-inclusive.

    `ring` may be open or closed; coordinates are (x, y) pairs.
    """
    n = len(ring)
    if n == 0:
        return False
    if ring[0] == ring[-1]:
        n -= 1
    if n < 3:
        return False
    inside = False
    j = n - 1
    for i in range(n):
        xi, yi = ring[i]
        xj, yj = ring[j]
        if _on_segment(x, y, xi, yi, xj, yj):
            return True
        if (yi > y) != (yj > y):
            x_cross = xi + (y - yi) * (xj - xi) / (yj - yi)
            if x < x_cross:
                inside = not inside
        j = i
    return inside


def _on_segment(x, y, x1, y1, x2, y2) -> bool:
    cross = (x2 - x1) * (y - y1) - (y2 - y1) * (x - x1)
    if abs(cross) > 1e-15 * max(1.0, abs(x2 - x1) + abs(y2 - y1)):
        return False
    return min(x1, x2) <= x <= max(x1, x2) and min(y1, y2) <= y <= max(y1, y2)


def point_in_region(point: Point, polygon: RegionPolygon) -> bool:
    """Even-odd membership over all rings; boundary points are inside."""
    lat, lon = point
    crossings_odd = False
    for ring in polygon.rings:
        xy = [(lon_, lat_) for lat_, lon_ in ring]
        n = len(xy) - 1  # rings are closed
        j = n - 1
        for i in range(n):
            xi, yi = xy[i]
            xj, yj = xy[j]
            if _on_segment(lon, lat, xi, yi, xj, yj):
                return True
            if (yi > lat) != (yj > lat):
                x_cross = xi + (lat - yi) * (xj - xi) / (yj - yi)
                if lon < x_cross:
                    crossings_odd = not crossings_odd
            j = i
    return crossings_odd


def region_of(
    point: Point, regions: Mapping[str, RegionPolygon]
) -> str | None:
    """First region (by sorted id) containing the point, None if no region."""
    for region_id in sorted(regions):
        if point_in_region(point, regions[region_id]):
            return region_id
    return None


# ---------------------------------------------------------------------------
# Flood proximity


def near_flood(site: BtsSite, mask, d_max_m: float = 5000.0) -> bool:
    """True iff the site sits in a flooded raster cell or within d_max_m
    of a flooded cell centre. Empty masks are never near."""
    geom = mask.geometry
    flooded = np.argwhere(np.asarray(mask.values) != 0)
    if flooded.shape[0] == 0:
        return False
    cell = geom.cell_of(site.lat, site.lon)
    if cell is not None and mask.values[cell] != 0:
        return True
    lats = geom.lat0 + flooded[:, 0] * geom.cell_deg
    lons = geom.lon0 + flooded[:, 1] * geom.cell_deg
    d = haversine_m_many(site.lat, site.lon, lats, lons)
    return bool(d.min() <= d_max_m)


# ---------------------------------------------------------------------------
# GeoJSON


def _round6(x: float) -> float:
    return round(float(x), 6)


def load_regions_geojson(path: str) -> dict[str, RegionPolygon]:
    """Load a FeatureCollection of Polygon features keyed by region_id."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        raise DataError(f"cannot read regions file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc
    if doc.get("type") != "FeatureCollection":
        raise DataError(f"{path}: expected a FeatureCollection")
    regions: dict[str, RegionPolygon] = {}
    for feature in doc.get("features", []):
        props = feature.get("properties") or {}
        region_id = props.get("region_id")
        if not region_id:
            raise DataError(f"{path}: feature without region_id property")
        if region_id in regions:
            raise DataError(f"{path}: duplicate region_id {region_id!r}")
        geom = feature.get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise DataError(
                f"{path}: region {region_id}: unsupported geometry "
                f"{geom.get('type')!r} (only Polygon)"
            )
        rings = tuple(
            tuple((float(lat), float(lon)) for lon, lat in ring)
            for ring in geom.get("coordinates", [])
        )
        regions[region_id] = RegionPolygon(region_id, props.get("name", region_id), rings)
    return regions


def save_regions_geojson(regions: Mapping[str, RegionPolygon], path: str) -> None:
    features = []
    for region_id in sorted(regions):
        region = regions[region_id]
        features.append(
            {
                "type": "Feature",
                "properties": {"region_id": region.region_id, "name": region.name},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [
                        [[_round6(lon), _round6(lat)] for lat, lon in ring]
                        for ring in region.rings
                    ],
                },
            }
        )
    doc = {"type": "FeatureCollection", "features": features}
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, sort_keys=True, separators=(",", ":"))
        f.write("\n")


def voronoi_geojson(diagram: VoronoiDiagram) -> dict:
    """Cells as a FeatureCollection of lat/lon polygons."""
    features = []
    for bts_id in sorted(diagram.cells):
        cell = diagram.cells[bts_id]
        ring = [diagram.projection.inverse(u, v) for u, v in cell.vertices]
        if ring:
            ring.append(ring[0])
        features.append(
            {
                "type": "Feature",
                "properties": {"bts_id": bts_id, "kind": "voronoi_cell"},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[_round6(lon), _round6(lat)] for lat, lon in ring]],
                },
            }
        )
    box = diagram.clip_box
    return {
        "type": "FeatureCollection",
        "bbox": [box.lon_min, box.lat_min, box.lon_max, box.lat_max],
        "features": features,
    }


def save_voronoi_geojson(diagram: VoronoiDiagram, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(voronoi_geojson(diagram), f, sort_keys=True, separators=(",", ":"))
        f.write("\n")
