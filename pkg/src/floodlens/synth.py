"""Deterministic synthetic scenarios: CDR logs, registries, regions,
rain grids, pre/post rasters, and a ground-truth manifest.

Counts come first: per-tower daily unique-phone counts are drawn from a
seeded Poisson process (with a weekly multiplier), spikes multiply and
outages zero them, and only then are call records constructed to realise
those counts exactly -- so downstream claims are tested against planted
truth, never against re-derived statistics. Phones belong to per-tower
pools drawn proportional to the census, which makes the home-antenna
census comparison meaningful. The same seed always yields a byte-
identical bundle.

Baseline modes:
  * "iid": fresh Poisson draws every day (the default null model);
  * "weekly_template": one baseline-window template repeated through the
    event window, so a no-event scenario has exactly equal baseline and
    event statistics per tower (useful for exceedance-shift claims).
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

import numpy as np

from .cdr import BBox, BtsSite, CdrRecord, export_bts_registry, export_cdr_csv
from .errors import DataError
from .geo import RegionPolygon, haversine_m, region_of, save_regions_geojson
from .home_antenna import export_census_csv
from .impact import export_affected_csv
from .raster import GridGeometry, Raster, write_ascii_grid
from .rainfall import RainGrid, save_rain_grid
from .timebase import DayBucketing, day_iso, parse_day

DEFAULT_CENSUS_BASE = (
    260000, 105000, 53000, 150000, 27000, 91000,
    18000, 200000, 10000, 120000, 45000, 75000,
)


@dataclass
class ScenarioConfig:
    rng_seed: int = 20091101
    day0_iso: str = "2009-10-01"
    n_days: int = 62
    bl_days: int = 31
    tz_offset_hours: int = -6
    # study area and administrative grid
    bbox: tuple[float, float, float, float] = (17.2, 18.8, -94.4, -92.2)
    n_bts: int = 60
    region_rows: int = 3
    region_cols: int = 4
    census: dict[str, int] | None = None
    n_phones: int = 24000
    # baseline activity process
    daily_rate: float = 25.0
    rate_spread: tuple[float, float] = (0.7, 1.4)
    weekly_profile: tuple[float, ...] = (1.0, 1.02, 0.97, 1.0, 1.05, 0.88, 0.80)
    baseline_mode: str = "iid"
    # event: rainfall peak then activity spikes, then outages
    rain_peak_day_offset: int = 33
    spike_lag_days: int = 4
    spike_tower_count: int = 6
    spike_towers: list[str] | None = None
    spike_factor: float = 6.0
    spike_duration: int = 1
    outage_tower_count: int = 2
    outage_towers: list[str] | None = None
    outage_day_offsets: tuple[int, int] = (40, 42)
    # rain grid
    rain_cell_deg: float = 0.25
    rain_timestep_hours: int = 3
    rain_magnitude_mm: float = 800.0
    rain_accum_window_days: int = 3
    rain_spatial_sigma_deg: float = 0.45
    rain_temporal_sigma_hours: float = 18.0
    # rasters and segmentation truth
    raster_cell_deg: float = 0.02
    raster_base_value: float = 0.1
    flood_delta: float = 1.0
    flood_rect_cells: tuple[int, int] = (18, 22)
    seg_sigma_px: float = 0.5
    seg_t_seed: float = 0.9
    seg_t_mask: float = 0.4
    seg_connectivity: int = 8
    seg_min_area: int = 4

    def validate(self) -> None:
        def fail(field_name: str, why: str):
            raise DataError(f"scenario config: {field_name}: {why}")

        if self.n_days < 3:
            fail("n_days", "need at least 3 days")
        if not 2 <= self.bl_days < self.n_days:
            fail("bl_days", "baseline must be >= 2 days and end before the last day")
        if self.n_bts < self.region_rows * self.region_cols:
            fail("n_bts", "need at least one tower per region")
        if self.n_phones < self.n_bts:
            fail("n_phones", "need at least one phone per tower")
        if self.spike_factor < 1.0:
            fail("spike_factor", "must be >= 1")
        if self.spike_duration < 1:
            fail("spike_duration", "must be >= 1")
        if self.baseline_mode not in ("iid", "weekly_template"):
            fail("baseline_mode", f"unknown mode {self.baseline_mode!r}")
        if not self.rain_peak_day_offset >= self.bl_days:
            fail("rain_peak_day_offset", "rain event must start after the baseline")
        spike_peak = self.rain_peak_day_offset + self.spike_lag_days
        if not self.bl_days <= spike_peak < self.n_days:
            fail("spike_lag_days", "spike peak must land inside the event window")
        if self.outage_day_offsets[0] > self.outage_day_offsets[1]:
            fail("outage_day_offsets", "start after end")
        if self.outage_day_offsets[1] >= self.n_days:
            fail("outage_day_offsets", "outage beyond the scenario")
        if 24 % self.rain_timestep_hours != 0:
            fail("rain_timestep_hours", "must divide 24")
        if not self.rain_accum_window_days >= 1:
            fail("rain_accum_window_days", "must be >= 1")
        if self.spike_towers is not None and len(self.spike_towers) == 0:
            fail("spike_towers", "explicit list may not be empty")

    def to_json(self) -> dict:
        doc = asdict(self)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "ScenarioConfig":
        cfg = cls()
        known = set(cfg.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise DataError(f"scenario config: unknown fields {sorted(unknown)}")
        for key, value in doc.items():
            default = getattr(cfg, key)
            if isinstance(default, tuple) and isinstance(value, list):
                value = tuple(value)
            setattr(cfg, key, value)
        return cfg

    @classmethod
    def from_json_file(cls, path: str) -> "ScenarioConfig":
        try:
            with open(path, "r", encoding="utf-8") as f:
                doc = json.load(f)
        except OSError as exc:
            raise DataError(f"cannot read scenario config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON: {exc}") from exc
        return cls.from_json(doc)


def _region_grid(box: BBox, rows: int, cols: int) -> dict[str, RegionPolygon]:
    lat_step = (box.lat_max - box.lat_min) / rows
    lon_step = (box.lon_max - box.lon_min) / cols
    regions: dict[str, RegionPolygon] = {}
    idx = 1
    for r in range(rows):
        for c in range(cols):
            rid = f"R{idx:02d}"
            regions[rid] = RegionPolygon.rectangle(
                rid,
                BBox(
                    box.lat_min + r * lat_step,
                    box.lat_min + (r + 1) * lat_step,
                    box.lon_min + c * lon_step,
                    box.lon_min + (c + 1) * lon_step,
                ),
            )
            idx += 1
    return regions


def _default_census(regions: dict[str, RegionPolygon]) -> dict[str, int]:
    base = DEFAULT_CENSUS_BASE
    return {
        rid: base[i % len(base)] + 1000 * (i // len(base))
        for i, rid in enumerate(sorted(regions))
    }


def _region_center(region: RegionPolygon) -> tuple[float, float]:
    ring = region.rings[0]
    lats = [lat for lat, _ in ring[:-1]]
    lons = [lon for _, lon in ring[:-1]]
    return sum(lats) / len(lats), sum(lons) / len(lons)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class DrawnCounts:
    """Stage-one output: target counts before phone-pool clipping."""

    counts: dict[str, list[int]]
    rates: dict[str, float]
    positions: dict[str, tuple[float, float]]
    regions: dict[str, RegionPolygon]
    census: dict[str, int]
    pools: dict[str, list[str]]
    homes: list[tuple[str, str, str]]  # phone, tower, region
    rng: np.random.Generator


def draw_daily_counts(config: ScenarioConfig) -> DrawnCounts:
    """Place towers, build census-proportional phone pools, and draw
    per-tower daily target counts.

    Tower rates scale with pool size (daily_rate is the expected count
    at an average-pool tower), so per-phone activity -- and with it the
    census penetration the HAT analysis measures -- stays homogeneous
    across regions. Returns the generator in its post-draw state so
    generate() can keep consuming the same stream; also useful alone for
    metric-level experiments needing many towers without record files.
    """
    config.validate()
    rng = np.random.default_rng(config.rng_seed)
    box = BBox(*config.bbox)
    # -- tower placement: one per region centre (jittered), rest uniform
    regions = _region_grid(box, config.region_rows, config.region_cols)
    region_ids = sorted(regions)
    lat_step = (box.lat_max - box.lat_min) / config.region_rows
    lon_step = (box.lon_max - box.lon_min) / config.region_cols
    positions: list[tuple[float, float]] = []
    for rid in region_ids:
        clat, clon = _region_center(regions[rid])
        positions.append(
            (
                clat + rng.uniform(-0.2, 0.2) * lat_step,
                clon + rng.uniform(-0.2, 0.2) * lon_step,
            )
        )
    for _ in range(config.n_bts - len(region_ids)):
        positions.append(
            (
                rng.uniform(box.lat_min + 0.02, box.lat_max - 0.02),
                rng.uniform(box.lon_min + 0.02, box.lon_max - 0.02),
            )
        )
    tower_ids = [f"T{i + 1:04d}" for i in range(config.n_bts)]
    position_map = dict(zip(tower_ids, positions))

    # -- phone pools proportional to census, region-major, round-robin
    census = config.census or _default_census(regions)
    if sorted(census) != sorted(regions):
        raise DataError("scenario config: census: region ids do not match the grid")
    total = sum(census[rid] for rid in region_ids)
    probs = [census[rid] / total for rid in region_ids]
    region_phone_counts = rng.multinomial(config.n_phones, probs)
    towers_by_region: dict[str, list[str]] = {rid: [] for rid in region_ids}
    for bts_id in tower_ids:
        rid = region_of(position_map[bts_id], regions)
        if rid is not None:
            towers_by_region[rid].append(bts_id)
    pools: dict[str, list[str]] = {b: [] for b in tower_ids}
    homes: list[tuple[str, str, str]] = []
    counter = 0
    for rid, n_region in zip(region_ids, region_phone_counts):
        towers = towers_by_region[rid]
        if not towers:
            raise DataError(f"scenario config: region {rid} has no towers")
        for j in range(int(n_region)):
            phone = f"P{counter + 1:07d}"
            counter += 1
            tower = towers[j % len(towers)]
            pools[tower].append(phone)
            homes.append((phone, tower, rid))

    # -- per-tower rates and daily counts
    mean_pool = config.n_phones / config.n_bts
    rates = {
        bts_id: config.daily_rate
        * rng.uniform(*config.rate_spread)
        * (len(pools[bts_id]) / mean_pool)
        for bts_id in tower_ids
    }
    weekly = config.weekly_profile
    counts: dict[str, list[int]] = {}
    for bts_id in tower_ids:
        lam = rates[bts_id]
        if config.baseline_mode == "weekly_template":
            template = [
                int(rng.poisson(lam * weekly[d % len(weekly)]))
                for d in range(config.bl_days)
            ]
            values = [template[d % config.bl_days] for d in range(config.n_days)]
        else:
            values = [
                int(rng.poisson(lam * weekly[d % len(weekly)]))
                for d in range(config.n_days)
            ]
        counts[bts_id] = values
    return DrawnCounts(
        counts, rates, position_map, regions, census, pools, homes, rng
    )


def generate(config: ScenarioConfig, out_dir: str) -> dict:
    """Write a full scenario bundle into out_dir; returns the manifest."""
    drawn = draw_daily_counts(config)
    counts, rates, rng = drawn.counts, drawn.rates, drawn.rng
    box = BBox(*config.bbox)
    regions = drawn.regions
    positions = drawn.positions
    census = drawn.census
    pools = drawn.pools
    homes = drawn.homes
    tower_ids = sorted(positions)
    region_ids = sorted(regions)
    registry = {b: BtsSite(b, positions[b][0], positions[b][1]) for b in tower_ids}
    bucketing = DayBucketing(config.tz_offset_hours)
    day0 = parse_day(config.day0_iso)
    bl_window = (day0, day0 + config.bl_days - 1)
    event_window = (day0 + config.bl_days, day0 + config.n_days - 1)

    # -- rain/flood centre: the largest-census region (spikes happen there)
    hot_region = min(region_ids, key=lambda rid: (-census[rid], rid))
    center_lat, center_lon = _region_center(regions[hot_region])

    # -- spike towers: nearest pool-sufficient towers to the centre
    w_max = max(config.weekly_profile)
    if config.spike_towers is not None:
        spike_towers = list(config.spike_towers)
        for b in spike_towers:
            if b not in registry:
                raise DataError(f"scenario config: spike_towers: unknown tower {b!r}")
    else:
        def spike_need(bts_id: str) -> int:
            peak = config.spike_factor * rates[bts_id] * w_max
            return int(peak + 8.0 * math.sqrt(peak)) + 1

        eligible = [b for b in tower_ids if len(pools[b]) >= spike_need(b)]
        eligible.sort(key=lambda b: (haversine_m(center_lat, center_lon, *positions[b]), b))
        if len(eligible) < config.spike_tower_count:
            raise DataError(
                "scenario config: spike_tower_count: not enough pool-sufficient towers"
            )
        spike_towers = sorted(eligible[: config.spike_tower_count])
    spike_peak = day0 + config.rain_peak_day_offset + config.spike_lag_days
    spike_window = (
        max(spike_peak - (config.spike_duration - 1) // 2, day0),
        min(spike_peak + config.spike_duration // 2, day0 + config.n_days - 1),
    )

    if config.outage_towers is not None:
        outage_towers = list(config.outage_towers)
        for b in outage_towers:
            if b not in registry:
                raise DataError(f"scenario config: outage_towers: unknown tower {b!r}")
    else:
        outage_towers = [b for b in tower_ids if b not in spike_towers][
            : config.outage_tower_count
        ]
    outage_days = (
        day0 + config.outage_day_offsets[0],
        day0 + config.outage_day_offsets[1],
    )

    # -- apply spikes, outages and pool clipping to the drawn counts
    final_counts: dict[str, list[int]] = {}
    for bts_id in tower_ids:
        values = list(counts[bts_id])
        pool_size = len(pools[bts_id])
        for offset in range(config.n_days):
            day = day0 + offset
            x = values[offset]
            if bts_id in spike_towers and spike_window[0] <= day <= spike_window[1]:
                x = _round_half_up(x * config.spike_factor)
            if bts_id in outage_towers and outage_days[0] <= day <= outage_days[1]:
                x = 0
            values[offset] = min(x, pool_size)
        final_counts[bts_id] = values

    # -- realise records: pair phones so unique-count == planted count
    records: list[CdrRecord] = []
    for offset in range(config.n_days):
        day = day0 + offset
        day_start = bucketing.day_start_epoch(day)
        for b_index, bts_id in enumerate(tower_ids):
            x = final_counts[bts_id][offset]
            if x == 0:
                continue
            pool = pools[bts_id]
            start = (offset * 9973) % len(pool)
            chosen = [pool[(start + i) % len(pool)] for i in range(x)]
            pairs = [(chosen[i], chosen[i + 1]) for i in range(0, x - 1, 2)]
            if x % 2 == 1:
                pairs.append((chosen[x - 1], chosen[0]))
            for j, (a, b) in enumerate(pairs):
                sec = ((b_index * 131 + offset * 477 + j) * 7919) % 86400
                records.append(
                    CdrRecord(
                        a,
                        b,
                        datetime.fromtimestamp(day_start + sec, tz=timezone.utc),
                        (j * 37 + offset) % 600,
                        bts_id,
                        bts_id,
                    )
                )

    # -- rain grid: separable space-time Gaussian bump, scaled so the
    #    accumulation over the configured window at the peak cell equals
    #    rain_magnitude_mm exactly
    rain_geom = _grid_covering(box, config.rain_cell_deg)
    rain_peak_day = day0 + config.rain_peak_day_offset
    frames_per_day = 24 // config.rain_timestep_hours
    n_frames = config.n_days * frames_per_day
    step_s = config.rain_timestep_hours * 3600
    epoch0 = bucketing.day_start_epoch(day0)
    t_peak = bucketing.day_start_epoch(rain_peak_day) + 43200
    sigma_t = config.rain_temporal_sigma_hours * 3600.0
    g_t = np.array(
        [
            math.exp(-(((epoch0 + k * step_s + step_s / 2) - t_peak) ** 2) / (2 * sigma_t**2))
            for k in range(n_frames)
        ]
    )
    lat_centers = rain_geom.lat0 + np.arange(rain_geom.nrows) * rain_geom.cell_deg
    lon_centers = rain_geom.lon0 + np.arange(rain_geom.ncols) * rain_geom.cell_deg
    d2 = (
        (lat_centers[:, None] - center_lat) ** 2
        + (lon_centers[None, :] - center_lon) ** 2
    )
    g_s = np.exp(-d2 / (2 * config.rain_spatial_sigma_deg**2))
    peak_cell = rain_geom.cell_of(center_lat, center_lon)
    assert peak_cell is not None
    accum_start = rain_peak_day - (config.rain_accum_window_days - 1) // 2
    accum_window = (accum_start, accum_start + config.rain_accum_window_days - 1)
    in_window = [
        accum_window[0] <= bucketing.day_of_epoch(epoch0 + k * step_s) <= accum_window[1]
        for k in range(n_frames)
    ]
    s_window = float(g_t[np.array(in_window)].sum())
    amplitude = config.rain_magnitude_mm / (float(g_s[peak_cell]) * s_window)
    frames = tuple(amplitude * g_s * g_t[k] for k in range(n_frames))
    instants = tuple(
        datetime.fromtimestamp(epoch0 + k * step_s, tz=timezone.utc)
        for k in range(n_frames)
    )
    rain_grid = RainGrid(rain_geom, instants, frames)

    # -- rasters: constant pre, flood rectangle added to post
    raster_geom = _grid_covering(box, config.raster_cell_deg)
    margin = math.ceil(3 * config.seg_sigma_px) + 1
    center_cell = raster_geom.cell_of(center_lat, center_lon)
    assert center_cell is not None
    h, w = config.flood_rect_cells
    r0 = min(max(center_cell[0] - h // 2, margin), raster_geom.nrows - margin - h)
    c0 = min(max(center_cell[1] - w // 2, margin), raster_geom.ncols - margin - w)
    if r0 < margin or c0 < margin:
        raise DataError("scenario config: flood_rect_cells: rectangle does not fit")
    flood_rows = (r0, r0 + h - 1)
    flood_cols = (c0, c0 + w - 1)
    pre_values = np.full((raster_geom.nrows, raster_geom.ncols), config.raster_base_value)
    post_values = pre_values.copy()
    post_values[flood_rows[0] : flood_rows[1] + 1, flood_cols[0] : flood_cols[1] + 1] += (
        config.flood_delta
    )

    # -- affected-population table for flooded regions
    flood_lat = (
        raster_geom.lat0 + (flood_rows[0] - 0.5) * raster_geom.cell_deg,
        raster_geom.lat0 + (flood_rows[1] + 0.5) * raster_geom.cell_deg,
    )
    flood_lon = (
        raster_geom.lon0 + (flood_cols[0] - 0.5) * raster_geom.cell_deg,
        raster_geom.lon0 + (flood_cols[1] + 0.5) * raster_geom.cell_deg,
    )
    affected: dict[str, tuple[int, int]] = {}
    for rid in region_ids:
        ring = regions[rid].rings[0]
        r_lat = (min(p[0] for p in ring), max(p[0] for p in ring))
        r_lon = (min(p[1] for p in ring), max(p[1] for p in ring))
        overlaps = not (
            flood_lat[1] < r_lat[0]
            or flood_lat[0] > r_lat[1]
            or flood_lon[1] < r_lon[0]
            or flood_lon[0] > r_lon[1]
        )
        if overlaps:
            pop = census[rid] // 4
            affected[rid] = (pop, max(1, pop // 1500))

    # -- write the bundle
    os.makedirs(out_dir, exist_ok=True)

    def p(name: str) -> str:
        return os.path.join(out_dir, name)

    export_cdr_csv(records, p("cdr.csv"))
    export_bts_registry(registry, p("bts.csv"))
    save_regions_geojson(regions, p("regions.geojson"))
    export_census_csv(census, p("census.csv"))
    export_affected_csv(affected, p("affected.csv"))
    with open(p("homes.csv"), "w", encoding="utf-8", newline="\n") as f:
        f.write("phone_id,bts_id,region_id\n")
        for phone, tower, rid in homes:
            f.write(f"{phone},{tower},{rid}\n")
    with open(p("planted_counts.csv"), "w", encoding="utf-8", newline="\n") as f:
        f.write("bts_id,day_iso,value\n")
        for bts_id in tower_ids:
            for offset, v in enumerate(final_counts[bts_id]):
                f.write(f"{bts_id},{day_iso(day0 + offset)},{v}\n")
    save_rain_grid(rain_grid, p(os.path.join("rain", "index.csv")))
    write_ascii_grid(Raster(raster_geom, pre_values), p("raster_pre.asc"))
    write_ascii_grid(Raster(raster_geom, post_values), p("raster_post.asc"))
    with open(p("scenario_config.json"), "w", encoding="utf-8", newline="\n") as f:
        json.dump(config.to_json(), f, sort_keys=True, indent=1)
        f.write("\n")

    manifest = {
        "day0": day0,
        "tz_offset_hours": config.tz_offset_hours,
        "bbox": list(config.bbox),
        "bl_window": list(bl_window),
        "event_window": list(event_window),
        "n_bts": config.n_bts,
        "n_phones": config.n_phones,
        "n_records": len(records),
        "baseline_mode": config.baseline_mode,
        "pool_sizes": {b: len(pools[b]) for b in tower_ids},
        "census": census,
        "affected": {rid: list(v) for rid, v in affected.items()},
        "spike": {
            "towers": spike_towers,
            "factor": config.spike_factor,
            "window": list(spike_window),
            "peak_day": spike_peak,
        },
        "outage": {"towers": outage_towers, "days": list(outage_days)},
        "rain": {
            "center": [center_lat, center_lon],
            "peak_cell": list(peak_cell),
            "peak_day": rain_peak_day,
            "accum_window": list(accum_window),
            "magnitude_mm": config.rain_magnitude_mm,
        },
        "expected_lag_days": config.spike_lag_days,
        "flood": {
            "rows": list(flood_rows),
            "cols": list(flood_cols),
            "lat": list(flood_lat),
            "lon": list(flood_lon),
            "delta": config.flood_delta,
            "segmentation": {
                "sigma_px": config.seg_sigma_px,
                "t_seed": config.seg_t_seed,
                "t_mask": config.seg_t_mask,
                "connectivity": config.seg_connectivity,
                "min_area": config.seg_min_area,
            },
        },
        "files": {
            "cdr": "cdr.csv",
            "bts": "bts.csv",
            "regions": "regions.geojson",
            "census": "census.csv",
            "affected": "affected.csv",
            "homes": "homes.csv",
            "planted_counts": "planted_counts.csv",
            "rain_index": "rain/index.csv",
            "raster_pre": "raster_pre.asc",
            "raster_post": "raster_post.asc",
        },
    }
    with open(p("manifest.json"), "w", encoding="utf-8", newline="\n") as f:
        json.dump(manifest, f, sort_keys=True, indent=1)
        f.write("\n")
    return manifest


def _grid_covering(box: BBox, cell_deg: float) -> GridGeometry:
    nrows = int(math.ceil((box.lat_max - box.lat_min) / cell_deg)) + 1
    ncols = int(math.ceil((box.lon_max - box.lon_min) / cell_deg)) + 1
    return GridGeometry(nrows, ncols, box.lat_min, box.lon_min, cell_deg)


def load_manifest(scenario_dir: str) -> dict:
    path = os.path.join(scenario_dir, "manifest.json")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON: {exc}") from exc


# ---------------------------------------------------------------------------
# Large-scale CDR writer (performance scenarios)


def generate_cdr_stream(
    path: str,
    n_records: int,
    n_bts: int = 200,
    n_phones: int = 50_000,
    n_days: int = 50,
    day0_iso: str = "2009-10-01",
    tz_offset_hours: int = -6,
) -> None:
    """Write a large, valid, deterministic CDR file fast.

    Cyclic (seedless) patterns rather than planted truth: meant for
    throughput and memory tests where only schema validity and realistic
    cardinalities matter.
    """
    bucketing = DayBucketing(tz_offset_hours)
    day0 = parse_day(day0_iso)
    date_part = [
        datetime.fromtimestamp(
            bucketing.day_start_epoch(day0 + d) + 12 * 3600, tz=timezone.utc
        ).strftime("%Y-%m-%d")
        for d in range(n_days + 1)
    ]
    time_part = [f"{s // 3600:02d}:{s % 3600 // 60:02d}:{s % 60:02d}" for s in range(0, 86400, 7)]
    phones = [f"p{i:07d}" for i in range(n_phones)]
    towers = [f"T{i:04d}" for i in range(n_bts)]
    durations = [str(i) for i in range(600)]
    tz_shift = tz_offset_hours * 3600
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("origin_id,dest_id,timestamp_utc,duration_s,origin_bts,dest_bts\n")
        chunk: list[str] = []
        append = chunk.append
        for i in range(n_records):
            d = (i * 7) % n_days
            sec_idx = (i * 7919) % len(time_part)
            t = towers[i % n_bts]
            append(
                f"{phones[i % n_phones]},{phones[(i * 13 + 1) % n_phones]},"
                f"{date_part[d]}T{time_part[sec_idx]}Z,{durations[i % 600]},{t},{t}"
            )
            if len(chunk) == 100_000:
                f.write("\n".join(chunk))
                f.write("\n")
                chunk.clear()
        if chunk:
            f.write("\n".join(chunk))
            f.write("\n")
