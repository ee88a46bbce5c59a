"""Command-line entry points.

Every stage is a file-to-file function; `pipeline` chains the same stage
functions over a scenario directory, so stage-by-stage invocation and
the composite produce byte-identical outputs by construction. All
randomness flows through explicit seeds and no output embeds wall-clock
time, so reruns are reproducible; FLOODLENS_THREADS (or --workers) caps
ingestion parallelism without affecting any output byte.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

from . import activity as act
from . import cdr, geo, home_antenna, impact, rainfall, raster, synth
from .errors import DataError
from .timebase import DayBucketing, parse_day_range

DEFAULT_D_MAX_M = 5000.0
DEFAULT_K_HOT = 6


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting with its own codes."""

    def error(self, message):
        raise _UsageError(message)


def _workers(args) -> int:
    if getattr(args, "workers", None):
        return max(1, args.workers)
    env = os.environ.get("FLOODLENS_THREADS")
    if env and env.isdigit():
        return max(1, int(env))
    return 1


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _load_zscores(path: str, z_max: float):
    return act.load_zscore_csv(path, z_max)


def _night_window(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition(":")
    if not sep or not lo.isdigit() or not hi.isdigit():
        raise _UsageError(f"bad night window {text!r}, expected 'START:END' hours")
    start, end = int(lo), int(hi)
    if not (0 <= start <= 23 and 0 <= end <= 23):
        raise _UsageError("night window hours must be 0..23")
    return start, end


def _bbox(text: str) -> cdr.BBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise _UsageError("bbox must be lat_min,lat_max,lon_min,lon_max")
    try:
        return cdr.BBox(*(float(p) for p in parts))
    except ValueError as exc:
        raise _UsageError(f"bad bbox: {exc}") from None


# ---------------------------------------------------------------------------
# Stage implementations (file to file)


def stage_ingest(args) -> None:
    registry = cdr.parse_bts_registry(args.bts)
    records, diagnostics = cdr.parse_cdr_file(args.cdr, strict=args.strict)
    quarantine = []
    if args.bbox:
        records, quarantine = cdr.filter_bbox(records, registry, _bbox(args.bbox))
    os.makedirs(args.out, exist_ok=True)
    cdr.export_cdr_csv(records, os.path.join(args.out, "records.csv"))
    with open(os.path.join(args.out, "diagnostics.txt"), "w", encoding="utf-8") as f:
        for d in diagnostics:
            f.write(str(d) + "\n")
    with open(os.path.join(args.out, "quarantine.csv"), "w", encoding="utf-8") as f:
        f.write("missing_towers,record\n")
        for rec, missing in quarantine:
            f.write(f"{';'.join(missing)},{cdr.format_record(rec)}\n")
    print(
        f"ingest: kept {len(records)} records, "
        f"{len(diagnostics)} malformed, {len(quarantine)} quarantined"
    )


def stage_activity(args) -> None:
    registry = cdr.parse_bts_registry(args.bts)
    bucketing = DayBucketing(args.tz_offset_hours)
    series, diagnostics = act.activity_from_file(
        args.cdr, registry, bucketing, strict=args.strict, workers=_workers(args)
    )
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    act.export_series_csv(series, args.out)
    if diagnostics:
        print(f"activity: {len(diagnostics)} malformed lines skipped")
    print(f"activity: wrote {args.out} ({len(series)} towers)")


def stage_zscore(args) -> None:
    series = act.load_activity_csv(args.activity)
    bl_window = parse_day_range(args.bl)
    stats = {b: act.baseline_stats(s, bl_window) for b, s in series.items()}
    zmap = {b: act.zscore_series(series[b], stats[b], args.z_max) for b in series}
    act.export_zscore_csv(zmap, args.out)
    if args.baseline_out:
        act.export_baseline_csv(stats, args.baseline_out)
    degenerate = sum(1 for st in stats.values() if st.degenerate)
    print(f"zscore: wrote {args.out} ({len(zmap)} towers, {degenerate} degenerate)")


def _curve_thresholds(maxima_values, spec_text):
    if spec_text:
        lo_s, _, rest = spec_text.partition(":")
        hi_s, _, step_s = rest.partition(":")
        try:
            lo, hi, step = float(lo_s), float(hi_s), float(step_s)
        except ValueError:
            raise _UsageError("thresholds must be 'lo:hi:step'") from None
        if step <= 0 or hi < lo:
            raise _UsageError("thresholds must be 'lo:hi:step' with step > 0")
    else:
        lo = math.floor(min(maxima_values) * 10.0) / 10.0
        hi = math.ceil(max(maxima_values) * 10.0) / 10.0
        step = 0.1
    n = int(round((hi - lo) / step)) + 1
    return [lo + i * step for i in range(n)]


def stage_exceedance(args) -> None:
    zmap = _load_zscores(args.zscore, args.z_max)
    bl_window = parse_day_range(args.bl)
    event_window = parse_day_range(args.window)
    bl_maxima = {b: act.max_metric(z, bl_window)[0] for b, z in zmap.items()}
    ev_maxima = {b: act.max_metric(z, event_window)[0] for b, z in zmap.items()}
    thresholds = _curve_thresholds(
        list(bl_maxima.values()) + list(ev_maxima.values()), args.thresholds
    )
    act.export_exceedance_csv(
        act.exceedance_curve(bl_maxima, thresholds), args.out_bl
    )
    act.export_exceedance_csv(
        act.exceedance_curve(ev_maxima, thresholds), args.out_event
    )
    print(f"exceedance: wrote {args.out_bl} and {args.out_event}")


def stage_hot(args) -> None:
    zmap = _load_zscores(args.zscore, args.z_max)
    window = parse_day_range(args.window)
    maxima = {}
    arg_days = {}
    for b, z in zmap.items():
        maxima[b], arg_days[b] = act.max_metric(z, window)
    hot = act.top_k_hot(maxima, args.k_hot)
    from .timebase import day_iso

    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        f.write("bts_id,max_z,day_of_max_iso\n")
        for b in hot:
            f.write(f"{b},{maxima[b]:.6f},{day_iso(arg_days[b])}\n")
    print(f"hot: wrote {args.out} (top {len(hot)})")


def stage_hat(args) -> None:
    bucketing = DayBucketing(args.tz_offset_hours)
    bl_window = parse_day_range(args.bl)
    night = _night_window(args.night)
    diagnostics: list = []
    records = cdr.iter_cdr_file(args.cdr, diagnostics, strict=args.strict)
    hat = home_antenna.assign_hat(records, night, bl_window, bucketing)
    home_antenna.export_hat_csv(hat, args.out)
    print(f"hat: wrote {args.out} ({len(hat)} phones)")


def stage_census_compare(args) -> None:
    registry = cdr.parse_bts_registry(args.bts)
    regions = geo.load_regions_geojson(args.regions)
    census = home_antenna.load_census_csv(args.census)
    hat = home_antenna.load_hat_csv(args.hat)
    pops = home_antenna.estimate_population(hat, registry, regions)
    pops = home_antenna.join_census(pops, census)
    home_antenna.export_region_population_csv(pops, args.out_population)
    comparison = home_antenna.compare_census(pops)
    doc = {
        "slope": round(comparison.slope, 6),
        "intercept": round(comparison.intercept, 6),
        "r_squared": round(comparison.r_squared, 6),
        "ratio_cv": round(comparison.ratio_cv, 6),
        "n_regions": comparison.n_regions,
        "per_region_ratio": {
            k: round(v, 6) for k, v in sorted(comparison.per_region_ratio.items())
        },
    }
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, sort_keys=True, indent=1)
        f.write("\n")
    print(f"census-compare: r_squared={comparison.r_squared:.4f} -> {args.out}")


def stage_voronoi(args) -> None:
    registry = cdr.parse_bts_registry(args.bts)
    if args.bbox:
        box = _bbox(args.bbox)
    else:
        lats = [s.lat for s in registry.values()]
        lons = [s.lon for s in registry.values()]
        margin = 0.1
        box = cdr.BBox(
            min(lats) - margin, max(lats) + margin, min(lons) - margin, max(lons) + margin
        )
    diagram = geo.voronoi_cells(registry, box)
    geo.save_voronoi_geojson(diagram, args.out)
    if diagram.merged_duplicates:
        print(f"voronoi: merged duplicate sites {diagram.merged_duplicates}")
    print(f"voronoi: wrote {args.out} ({len(diagram.cells)} cells)")


def stage_segment(args) -> None:
    pre = raster.read_ascii_grid(args.pre)
    post = raster.read_ascii_grid(args.post)
    params = raster.SegmentationParams(
        sigma_px=args.sigma_px,
        t_seed=args.t_seed,
        t_mask=args.t_mask,
        connectivity=args.connectivity,
        min_area=args.min_area,
    )
    mask = raster.segment_flood(pre, post, params)
    raster.write_mask(mask, args.out)
    print(f"segment: wrote {args.out} ({mask.area_cells} flooded cells)")


def stage_rain(args) -> None:
    registry = cdr.parse_bts_registry(args.bts)
    bucketing = DayBucketing(args.tz_offset_hours)
    grid = rainfall.load_rain_grid(args.index)
    series = {
        b: rainfall.sample_at_site(grid, registry[b], bucketing)
        for b in sorted(registry)
    }
    rainfall.export_rain_series_csv(series, args.out)
    clamped = sum(1 for s in series.values() if s.clamped)
    if clamped:
        print(f"rain: {clamped} sites outside the grid extent (clamped)")
    print(f"rain: wrote {args.out} ({len(series)} towers)")


def stage_lag(args) -> None:
    zmap = _load_zscores(args.zscore, args.z_max)
    rain_map = rainfall.load_rain_series_csv(args.rain)
    window = parse_day_range(args.window)
    maxima = {b: act.max_metric(z, window)[0] for b, z in zmap.items()}
    hot = act.top_k_hot(maxima, args.k_hot)
    report = rainfall.lag_report(zmap, rain_map, window, hot)
    doc = {
        "hot_towers": report.towers,
        "per_tower_lag_days": {k: v for k, v in sorted(report.per_tower.items())},
        "median_lag_days": report.median_lag,
    }
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        json.dump(doc, f, sort_keys=True, indent=1)
        f.write("\n")
    print(f"lag: median {report.median_lag} days -> {args.out}")


def stage_impact(args) -> None:
    registry = cdr.parse_bts_registry(args.bts)
    zmap = _load_zscores(args.zscore, args.z_max)
    regions = geo.load_regions_geojson(args.regions)
    affected = impact.load_affected_csv(args.affected) if args.affected else {}
    mask = raster.read_mask(args.mask) if args.mask else None
    window = parse_day_range(args.window)
    result = impact.build_impact_map(
        zmap,
        registry,
        mask,
        regions,
        affected,
        window,
        d_max_m=args.d_max_m,
        shared_day_threshold=args.shared_day_threshold,
    )
    cells = None
    if args.with_cells:
        lats = [s.lat for s in registry.values()]
        lons = [s.lon for s in registry.values()]
        box = cdr.BBox(min(lats) - 0.1, max(lats) + 0.1, min(lons) - 0.1, max(lons) + 0.1)
        cells = geo.voronoi_cells(registry, box)
    impact.export_impact_geojson(result.records, args.out, cells)
    if result.unmatched_regions:
        print(f"impact: affected rows naming no region: {result.unmatched_regions}")
    flooded = sum(1 for r in result.records if r.in_flood)
    print(f"impact: wrote {args.out} ({len(result.records)} towers, {flooded} near flood)")


def stage_timelapse(args) -> None:
    zmap = _load_zscores(args.zscore, args.z_max)
    window = parse_day_range(args.days)
    paths = impact.export_timelapse(zmap, window, args.out)
    print(f"timelapse: wrote {len(paths)} frames under {args.out}")


def stage_synth(args) -> None:
    config = (
        synth.ScenarioConfig.from_json_file(args.config)
        if args.config
        else synth.ScenarioConfig()
    )
    if args.seed is not None:
        config.rng_seed = args.seed
    manifest = synth.generate(config, args.out)
    print(
        f"synth: wrote scenario to {args.out} "
        f"({manifest['n_records']} records, {manifest['n_bts']} towers)"
    )


def stage_pipeline(args) -> None:
    scenario = args.scenario
    manifest = synth.load_manifest(scenario)
    out = args.out
    os.makedirs(out, exist_ok=True)
    files = manifest["files"]

    def src(key: str) -> str:
        return os.path.join(scenario, files[key])

    def dst(name: str) -> str:
        return os.path.join(out, name)

    from .timebase import day_iso

    bl = f"{day_iso(manifest['bl_window'][0])}:{day_iso(manifest['bl_window'][1])}"
    event = (
        f"{day_iso(manifest['event_window'][0])}:{day_iso(manifest['event_window'][1])}"
    )
    tz = manifest["tz_offset_hours"]
    seg = manifest["flood"]["segmentation"]
    stages = [
        (
            "activity",
            dict(cdr=src("cdr"), bts=src("bts"), tz_offset_hours=tz, strict=False,
                 workers=args.workers, out=dst("activity.csv")),
            stage_activity,
        ),
        (
            "zscore",
            dict(activity=dst("activity.csv"), bl=bl, z_max=args.z_max,
                 out=dst("zscore.csv"), baseline_out=dst("baseline.csv")),
            stage_zscore,
        ),
        (
            "exceedance",
            dict(zscore=dst("zscore.csv"), bl=bl, window=event, z_max=args.z_max,
                 thresholds=None, out_bl=dst("exceedance_bl.csv"),
                 out_event=dst("exceedance_event.csv")),
            stage_exceedance,
        ),
        (
            "hot",
            dict(zscore=dst("zscore.csv"), window=event, k_hot=args.k_hot,
                 z_max=args.z_max, out=dst("hot_towers.csv")),
            stage_hot,
        ),
        (
            "hat",
            dict(cdr=src("cdr"), bl=bl, night=args.night, tz_offset_hours=tz,
                 strict=False, out=dst("hat.csv")),
            stage_hat,
        ),
        (
            "census-compare",
            dict(hat=dst("hat.csv"), bts=src("bts"), regions=src("regions"),
                 census=src("census"), out_population=dst("region_population.csv"),
                 out=dst("census_compare.json")),
            stage_census_compare,
        ),
        (
            "voronoi",
            dict(bts=src("bts"), bbox=",".join(str(v) for v in manifest["bbox"]),
                 out=dst("voronoi.geojson")),
            stage_voronoi,
        ),
        (
            "segment",
            dict(pre=src("raster_pre"), post=src("raster_post"),
                 sigma_px=seg["sigma_px"], t_seed=seg["t_seed"], t_mask=seg["t_mask"],
                 connectivity=seg["connectivity"], min_area=seg["min_area"],
                 out=dst("flood_mask.asc")),
            stage_segment,
        ),
        (
            "rain",
            dict(index=src("rain_index"), bts=src("bts"), tz_offset_hours=tz,
                 out=dst("rain_series.csv")),
            stage_rain,
        ),
        (
            "lag",
            dict(zscore=dst("zscore.csv"), rain=dst("rain_series.csv"), window=event,
                 k_hot=args.k_hot, z_max=args.z_max, out=dst("lag_report.json")),
            stage_lag,
        ),
        (
            "impact",
            dict(zscore=dst("zscore.csv"), bts=src("bts"), mask=dst("flood_mask.asc"),
                 regions=src("regions"), affected=src("affected"), window=event,
                 d_max_m=args.d_max_m, shared_day_threshold=None, with_cells=True,
                 z_max=args.z_max, out=dst("impact.geojson")),
            stage_impact,
        ),
        (
            "timelapse",
            dict(zscore=dst("zscore.csv"), days=event, z_max=args.z_max,
                 out=dst("timelapse")),
            stage_timelapse,
        ),
    ]
    inputs = {key: _sha256(src(key)) for key in sorted(files)}
    for name, params, fn in stages:
        fn(argparse.Namespace(**params))
    metadata = {
        "scenario": {"bl_window": manifest["bl_window"],
                     "event_window": manifest["event_window"],
                     "tz_offset_hours": tz},
        "parameters": {
            "z_max": args.z_max,
            "k_hot": args.k_hot,
            "d_max_m": args.d_max_m,
            "night_window": args.night,
            "segmentation": seg,
        },
        "input_sha256": inputs,
        "stages": [name for name, _, _ in stages],
    }
    with open(dst("run_metadata.json"), "w", encoding="utf-8", newline="\n") as f:
        json.dump(metadata, f, sort_keys=True, indent=1)
        f.write("\n")
    print(f"pipeline: complete -> {out}")


# ---------------------------------------------------------------------------
# Argument wiring


def _build_parser() -> _Parser:
    parser = _Parser(prog="floodlens", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name, fn, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(fn=fn)
        return p

    p = add("ingest", stage_ingest, "parse, validate and bbox-filter a CDR log")
    p.add_argument("--cdr", required=True)
    p.add_argument("--bts", required=True)
    p.add_argument("--bbox", default=None, help="lat_min,lat_max,lon_min,lon_max")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", required=True)

    p = add("activity", stage_activity, "per-tower daily unique-phone counts")
    p.add_argument("--cdr", required=True)
    p.add_argument("--bts", required=True)
    p.add_argument("--tz-offset-hours", type=int, default=-6, dest="tz_offset_hours")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("zscore", stage_zscore, "baseline stats and variation metric")
    p.add_argument("--activity", required=True)
    p.add_argument("--bl", required=True, help="baseline window YYYY-MM-DD:YYYY-MM-DD")
    p.add_argument("--z-max", type=float, default=act.DEFAULT_Z_MAX, dest="z_max")
    p.add_argument("--baseline-out", default=None, dest="baseline_out")
    p.add_argument("--out", required=True)

    p = add("exceedance", stage_exceedance, "exceedance curves for BL and event windows")
    p.add_argument("--zscore", required=True)
    p.add_argument("--bl", required=True)
    p.add_argument("--window", required=True)
    p.add_argument("--thresholds", default=None, help="lo:hi:step (default 0.1 grid)")
    p.add_argument("--z-max", type=float, default=act.DEFAULT_Z_MAX, dest="z_max")
    p.add_argument("--out-bl", required=True, dest="out_bl")
    p.add_argument("--out-event", required=True, dest="out_event")

    p = add("hot", stage_hot, "top-k towers by maximum metric")
    p.add_argument("--zscore", required=True)
    p.add_argument("--window", required=True)
    p.add_argument("--k-hot", type=int, default=DEFAULT_K_HOT, dest="k_hot")
    p.add_argument("--z-max", type=float, default=act.DEFAULT_Z_MAX, dest="z_max")
    p.add_argument("--out", required=True)

    p = add("hat", stage_hat, "home antenna tower per phone")
    p.add_argument("--cdr", required=True)
    p.add_argument("--bl", required=True)
    p.add_argument("--night", default="20:6", help="night window START:END hours")
    p.add_argument("--tz-offset-hours", type=int, default=-6, dest="tz_offset_hours")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--out", required=True)

    p = add("census-compare", stage_census_compare, "CDR population vs census")
    p.add_argument("--hat", required=True)
    p.add_argument("--bts", required=True)
    p.add_argument("--regions", required=True)
    p.add_argument("--census", required=True)
    p.add_argument("--out-population", required=True, dest="out_population")
    p.add_argument("--out", required=True)

    p = add("voronoi", stage_voronoi, "tower cells as GeoJSON")
    p.add_argument("--bts", required=True)
    p.add_argument("--bbox", default=None)
    p.add_argument("--out", required=True)

    p = add("segment", stage_segment, "flood mask from pre/post rasters")
    p.add_argument("--pre", required=True)
    p.add_argument("--post", required=True)
    p.add_argument("--sigma-px", type=float, default=1.0, dest="sigma_px")
    p.add_argument("--t-seed", type=float, required=True, dest="t_seed")
    p.add_argument("--t-mask", type=float, required=True, dest="t_mask")
    p.add_argument("--connectivity", type=int, default=8)
    p.add_argument("--min-area", type=int, default=4, dest="min_area")
    p.add_argument("--out", required=True)

    p = add("rain", stage_rain, "daily rainfall sampled at towers")
    p.add_argument("--index", required=True)
    p.add_argument("--bts", required=True)
    p.add_argument("--tz-offset-hours", type=int, default=-6, dest="tz_offset_hours")
    p.add_argument("--out", required=True)

    p = add("lag", stage_lag, "rain-peak to anomaly-peak lag for hot towers")
    p.add_argument("--zscore", required=True)
    p.add_argument("--rain", required=True)
    p.add_argument("--window", required=True)
    p.add_argument("--k-hot", type=int, default=DEFAULT_K_HOT, dest="k_hot")
    p.add_argument("--z-max", type=float, default=act.DEFAULT_Z_MAX, dest="z_max")
    p.add_argument("--out", required=True)

    p = add("impact", stage_impact, "fused per-tower impact map GeoJSON")
    p.add_argument("--zscore", required=True)
    p.add_argument("--bts", required=True)
    p.add_argument("--mask", default=None)
    p.add_argument("--regions", required=True)
    p.add_argument("--affected", default=None)
    p.add_argument("--window", required=True)
    p.add_argument("--d-max-m", type=float, default=DEFAULT_D_MAX_M, dest="d_max_m")
    p.add_argument(
        "--shared-day",
        type=float,
        default=None,
        dest="shared_day_threshold",
        help="use the single day on which most towers exceed this z threshold",
    )
    p.add_argument("--with-cells", action="store_true", dest="with_cells")
    p.add_argument("--z-max", type=float, default=act.DEFAULT_Z_MAX, dest="z_max")
    p.add_argument("--out", required=True)

    p = add("timelapse", stage_timelapse, "per-day |z| frames")
    p.add_argument("--zscore", required=True)
    p.add_argument("--days", required=True)
    p.add_argument("--z-max", type=float, default=act.DEFAULT_Z_MAX, dest="z_max")
    p.add_argument("--out", required=True)

    p = add("synth", stage_synth, "generate a synthetic scenario bundle")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("pipeline", stage_pipeline, "run every stage over a scenario directory")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--z-max", type=float, default=act.DEFAULT_Z_MAX, dest="z_max")
    p.add_argument("--k-hot", type=int, default=DEFAULT_K_HOT, dest="k_hot")
    p.add_argument("--d-max-m", type=float, default=DEFAULT_D_MAX_M, dest="d_max_m")
    p.add_argument("--night", default="20:6")

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return 1
        if getattr(args, "fn", None) is stage_pipeline and args.workers is None:
            args.workers = _workers(args)
        args.fn(args)
        return 0
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
