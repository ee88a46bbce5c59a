"""Geometry kernel: distances, Voronoi cells, polygon membership, proximity."""

import math
import random

import numpy as np
import pytest

from floodlens.cdr import BBox, BtsSite
from floodlens.errors import DataError
from floodlens.geo import (
    GnomonicProjection,
    RegionPolygon,
    haversine_m,
    near_flood,
    nearest_site,
    point_in_region,
    region_of,
    voronoi_cells,
)
from floodlens.raster import FloodMask, GridGeometry


def registry_of(coords):
    return {b: BtsSite(b, lat, lon) for b, (lat, lon) in coords.items()}


def oracle_nearest(point, coords):
    """Independent nearest-site scan via 3-D chord distance.

    Chord length is monotone in great-circle distance, so the argmin
    matches haversine without sharing its formula.
    """
    lat, lon = point

    def vec(la, lo):
        la, lo = math.radians(la), math.radians(lo)
        return (
            math.cos(la) * math.cos(lo),
            math.cos(la) * math.sin(lo),
            math.sin(la),
        )

    p = vec(lat, lon)
    best, best_d = None, math.inf
    for bts_id in sorted(coords):
        q = vec(*coords[bts_id])
        d = sum((a - b) ** 2 for a, b in zip(p, q))
        if d < best_d - 1e-18:
            best, best_d = bts_id, d
    return best


class TestHaversine:
    def test_zero_distance(self):
        assert haversine_m(18.0, -93.0, 18.0, -93.0) == 0.0

    def test_symmetric(self):
        rng = random.Random(1)
        for _ in range(50):
            a = (rng.uniform(-80, 80), rng.uniform(-179, 179))
            b = (rng.uniform(-80, 80), rng.uniform(-179, 179))
            assert haversine_m(*a, *b) == pytest.approx(haversine_m(*b, *a), rel=1e-12)

    def test_one_degree_meridian(self):
        # 1 degree of latitude is ~111.2 km on the mean-radius sphere
        assert haversine_m(0.0, 0.0, 1.0, 0.0) == pytest.approx(111_195, rel=1e-3)


class TestNearestSite:
    def test_strictly_closer(self):
        registry = registry_of({"A": (0.0, 0.0), "B": (0.0, 10.0)})
        assert nearest_site((0.0, 4.0), registry) == "A"

    def test_equidistant_tie_breaks_lexicographically(self):
        registry = registry_of({"B": (0.0, 10.0), "A": (0.0, 0.0)})
        assert nearest_site((0.0, 5.0), registry) == "A"

    def test_empty_registry_fatal(self):
        with pytest.raises(DataError):
            nearest_site((0.0, 0.0), {})

    def test_matches_exhaustive_scan(self):
        rng = random.Random(77)
        coords = {
            f"T{i:03d}": (rng.uniform(17.0, 19.0), rng.uniform(-94.5, -92.0))
            for i in range(25)
        }
        registry = registry_of(coords)
        for _ in range(1000):
            p = (rng.uniform(17.0, 19.0), rng.uniform(-94.5, -92.0))
            assert nearest_site(p, registry) == oracle_nearest(p, coords)


class TestProjection:
    def test_round_trip(self):
        proj = GnomonicProjection(18.1, -93.2)
        rng = random.Random(5)
        for _ in range(100):
            lat, lon = rng.uniform(16, 20), rng.uniform(-95, -91)
            u, v = proj.forward(lat, lon)
            la2, lo2 = proj.inverse(u, v)
            assert la2 == pytest.approx(lat, abs=1e-9)
            assert lo2 == pytest.approx(lon, abs=1e-9)

    def test_center_is_origin(self):
        proj = GnomonicProjection(18.0, -93.0)
        u, v = proj.forward(18.0, -93.0)
        assert abs(u) < 1e-15 and abs(v) < 1e-15


class TestVoronoi:
    BOX = BBox(17.0, 19.0, -94.5, -92.0)

    def test_single_site_cell_is_whole_box(self):
        registry = registry_of({"A": (18.0, -93.0)})
        diagram = voronoi_cells(registry, self.BOX)
        cell = diagram.cells["A"]
        # every box corner must be a cell vertex (in projected coords)
        proj = diagram.projection
        for lat, lon in [(17.0, -94.5), (17.0, -92.0), (19.0, -92.0), (19.0, -94.5)]:
            u, v = proj.forward(lat, lon)
            assert any(
                abs(u - cu) < 1e-12 and abs(v - cv) < 1e-12 for cu, cv in cell.vertices
            )

    def test_two_sites_boundary_is_perpendicular_bisector(self):
        registry = registry_of({"A": (18.0, -93.6), "B": (18.0, -92.6)})
        diagram = voronoi_cells(registry, self.BOX)
        proj = diagram.projection
        ua, va = proj.forward(18.0, -93.6)
        ub, vb = proj.forward(18.0, -92.6)
        # shared vertices of the two cells lie on the planar perpendicular
        # bisector of the projected sites
        shared = [
            p
            for p in diagram.cells["A"].vertices
            if any(abs(p[0] - q[0]) < 1e-12 and abs(p[1] - q[1]) < 1e-12 for q in diagram.cells["B"].vertices)
        ]
        assert len(shared) >= 2
        for u, v in shared:
            da = (u - ua) ** 2 + (v - va) ** 2
            db = (u - ub) ** 2 + (v - vb) ** 2
            assert da == pytest.approx(db, rel=1e-9)

    def test_membership_matches_nearest_site_on_grid(self):
        rng = random.Random(2021)
        coords = {
            f"T{i:02d}": (rng.uniform(17.1, 18.9), rng.uniform(-94.4, -92.1))
            for i in range(20)
        }
        registry = registry_of(coords)
        diagram = voronoi_cells(registry, self.BOX)
        mismatches = 0
        checked = 0
        for i in range(100):
            for j in range(100):
                lat = 17.0 + 2.0 * (i + 0.5) / 100
                lon = -94.5 + 2.5 * (j + 0.5) / 100
                # distance ties (within float noise of the bisector) excluded
                dists = sorted(
                    haversine_m(lat, lon, *coords[b]) for b in coords
                )
                if dists[1] - dists[0] <= 1e-6 * max(dists[0], 1.0):
                    continue
                checked += 1
                got = diagram.cell_containing(lat, lon)
                want = nearest_site((lat, lon), registry)
                mismatches += got != want
        assert checked > 9000
        assert mismatches == 0

    def test_duplicate_sites_merged_under_smallest_id(self):
        registry = registry_of({"B": (18.0, -93.0), "A": (18.0, -93.0), "C": (17.5, -93.5)})
        diagram = voronoi_cells(registry, self.BOX)
        assert set(diagram.cells) == {"A", "C"}
        assert diagram.merged_duplicates == {"B": "A"}

    def test_site_outside_box_fatal(self):
        registry = registry_of({"A": (10.0, -93.0)})
        with pytest.raises(DataError):
            voronoi_cells(registry, self.BOX)

    def test_cells_cover_box_samples(self):
        rng = random.Random(9)
        coords = {
            f"T{i}": (rng.uniform(17.2, 18.8), rng.uniform(-94.3, -92.2)) for i in range(7)
        }
        diagram = voronoi_cells(registry_of(coords), self.BOX)
        for _ in range(500):
            lat = rng.uniform(17.01, 18.99)
            lon = rng.uniform(-94.49, -92.01)
            assert diagram.cell_containing(lat, lon) is not None


def oracle_winding_inside(point, ring):
    """Winding-number membership for a closed ring (hole-free oracle)."""
    lat, lon = point
    wn = 0
    n = len(ring) - 1
    for i in range(n):
        y1, x1 = ring[i]
        y2, x2 = ring[i + 1]
        if y1 <= lat:
            if y2 > lat and (x2 - x1) * (lat - y1) - (y2 - y1) * (lon - x1) > 0:
                wn += 1
        elif y2 <= lat and (x2 - x1) * (lat - y1) - (y2 - y1) * (lon - x1) < 0:
            wn -= 1
    return wn != 0


class TestPointInRegion:
    SQUARE = RegionPolygon.rectangle("R1", BBox(0.0, 10.0, 0.0, 10.0))

    DONUT = RegionPolygon(
        "R2",
        "donut",
        (
            ((0.0, 0.0), (0.0, 10.0), (10.0, 10.0), (10.0, 0.0), (0.0, 0.0)),
            ((4.0, 4.0), (4.0, 6.0), (6.0, 6.0), (6.0, 4.0), (4.0, 4.0)),
        ),
    )

    def test_centroid_inside(self):
        assert point_in_region((5.0, 5.0), self.SQUARE)

    def test_point_in_hole_outside(self):
        assert not point_in_region((5.0, 5.0), self.DONUT)
        assert point_in_region((2.0, 2.0), self.DONUT)

    def test_boundary_counts_inside(self):
        assert point_in_region((0.0, 5.0), self.SQUARE)
        assert point_in_region((0.0, 0.0), self.SQUARE)
        assert point_in_region((4.0, 5.0), self.DONUT)  # hole boundary too

    def test_open_ring_rejected(self):
        with pytest.raises(DataError, match="not closed"):
            RegionPolygon("bad", "bad", (((0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.5)),))

    def test_matches_winding_oracle_random_polygons(self):
        rng = random.Random(31)
        for _ in range(20):
            # random star-shaped polygon around a centre (hole-free)
            cx, cy = rng.uniform(-5, 5), rng.uniform(-5, 5)
            n = rng.randrange(3, 12)
            angles = sorted(rng.uniform(0, 2 * math.pi) for _ in range(n))
            if len(set(angles)) < 3:
                continue
            ring = [
                (cy + rng.uniform(1, 6) * math.sin(a), cx + rng.uniform(1, 6) * math.cos(a))
                for a in angles
            ]
            ring.append(ring[0])
            poly = RegionPolygon("R", "R", (tuple(ring),))
            for _ in range(200):
                p = (rng.uniform(-12, 12), rng.uniform(-12, 12))
                got = point_in_region(p, poly)
                want = oracle_winding_inside(p, ring)
                if got != want:
                    # disagreement allowed only exactly on the boundary,
                    # where our rule is boundary-inclusive
                    assert got
                    continue

    def test_region_of_first_sorted_match(self):
        regions = {
            "R2": RegionPolygon.rectangle("R2", BBox(0.0, 10.0, 0.0, 10.0)),
            "R1": RegionPolygon.rectangle("R1", BBox(5.0, 15.0, 5.0, 15.0)),
        }
        assert region_of((7.0, 7.0), regions) == "R1"
        assert region_of((1.0, 1.0), regions) == "R2"
        assert region_of((50.0, 50.0), regions) is None


class TestNearFlood:
    GEOM = GridGeometry(nrows=20, ncols=20, lat0=17.0, lon0=-94.0, cell_deg=0.02)

    def mask_with(self, cells):
        values = np.zeros((20, 20), dtype=np.uint8)
        for r, c in cells:
            values[r, c] = 1
        return FloodMask(self.GEOM, values)

    def test_site_inside_flooded_cell(self):
        mask = self.mask_with([(5, 5)])
        lat, lon = self.GEOM.cell_center(5, 5)
        assert near_flood(BtsSite("T1", lat, lon), mask, d_max_m=1.0)

    def test_empty_mask_false(self):
        mask = self.mask_with([])
        assert not near_flood(BtsSite("T1", 17.1, -93.9), mask, d_max_m=1e9)

    def test_threshold_distance(self):
        mask = self.mask_with([(0, 0)])
        lat, lon = self.GEOM.cell_center(0, 5)  # 0.1 degrees east ~ 10.6 km
        site = BtsSite("T1", lat, lon)
        assert not near_flood(site, mask, d_max_m=5000.0)
        assert near_flood(site, mask, d_max_m=12000.0)

    def test_matches_bruteforce_scan(self):
        rng = random.Random(55)
        for _ in range(30):
            cells = [
                (rng.randrange(20), rng.randrange(20)) for _ in range(rng.randrange(0, 25))
            ]
            mask = self.mask_with(cells)
            site = BtsSite("T1", rng.uniform(16.9, 17.5), rng.uniform(-94.1, -93.5))
            d_max = rng.choice([1000.0, 5000.0, 20000.0])
            got = near_flood(site, mask, d_max)
            best = math.inf
            inside = False
            for r, c in set(cells):
                lat, lon = self.GEOM.cell_center(r, c)
                best = min(best, haversine_m(site.lat, site.lon, lat, lon))
                cell = self.GEOM.cell_of(site.lat, site.lon)
                if cell == (r, c):
                    inside = True
            want = inside or best <= d_max
            assert got == want
