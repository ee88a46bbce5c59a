"""CDR parsing, registry loading and bbox filtering."""

import random
from datetime import datetime, timedelta, timezone

import pytest

from floodlens.cdr import (
    BBox,
    BtsSite,
    CdrRecord,
    export_cdr_csv,
    filter_bbox,
    iter_cdr_file,
    parse_bts_registry,
    parse_cdr_file,
    parse_timestamp,
)
from floodlens.errors import DataError

T0 = datetime(2009, 11, 3, 14, 0, 0, tzinfo=timezone.utc)


def random_records(rng, n, n_phones=40, n_towers=8, with_missing_dest=True):
    out = []
    for _ in range(n):
        dest_bts = f"T{rng.randrange(n_towers):03d}"
        if with_missing_dest and rng.random() < 0.25:
            dest_bts = None
        out.append(
            CdrRecord(
                origin_id=f"p{rng.randrange(n_phones):04d}",
                dest_id=f"p{rng.randrange(n_phones):04d}",
                timestamp=T0 + timedelta(seconds=rng.randrange(86400 * 30)),
                duration_s=rng.randrange(600),
                origin_bts=f"T{rng.randrange(n_towers):03d}",
                dest_bts=dest_bts,
            )
        )
    return out


class TestParse:
    def test_direct_field_mapping(self, tmp_path):
        p = tmp_path / "cdr.csv"
        p.write_text("a1,b2,2009-11-03T14:00:00Z,60,T001,T002\n")
        records, diags = parse_cdr_file(str(p))
        assert diags == []
        (rec,) = records
        assert rec.origin_id == "a1"
        assert rec.dest_id == "b2"
        assert rec.timestamp == T0
        assert rec.duration_s == 60
        assert rec.origin_bts == "T001"
        assert rec.dest_bts == "T002"

    def test_malformed_timestamp_diagnostic(self, tmp_path):
        p = tmp_path / "cdr.csv"
        p.write_text("a1,b2,notadate,60,T001,T002\n")
        records, diags = parse_cdr_file(str(p))
        assert records == []
        assert len(diags) == 1
        assert str(diags[0]) == "line 1: bad timestamp"

    @pytest.mark.parametrize(
        "line,reason",
        [
            ("a1,b2,2009-11-03T14:00:00Z,60,T001", "bad field count"),
            (",b2,2009-11-03T14:00:00Z,60,T001,T002", "missing origin_id"),
            ("a1,b2,2009-11-03T14:00:00Z,60,,T002", "missing origin_bts"),
            ("a1,b2,2009-11-03T14:99:00Z,60,T001,T002", "bad timestamp"),
            ("a1,b2,2009-11-03T14:00:00Z,-3,T001,T002", "bad duration"),
            ("a1,b2,2009-11-03T14:00:00Z,6.5,T001,T002", "bad duration"),
        ],
    )
    def test_malformed_variants(self, tmp_path, line, reason):
        p = tmp_path / "cdr.csv"
        p.write_text(line + "\n")
        records, diags = parse_cdr_file(str(p))
        assert records == []
        assert [d.reason for d in diags] == [reason]

    def test_strict_mode_fatal_on_first(self, tmp_path):
        p = tmp_path / "cdr.csv"
        p.write_text(
            "a1,b2,2009-11-03T14:00:00Z,60,T001,T002\n"
            "a1,b2,notadate,60,T001,T002\n"
        )
        with pytest.raises(DataError, match="line 2: bad timestamp"):
            parse_cdr_file(str(p), strict=True)

    def test_missing_file_fatal(self, tmp_path):
        with pytest.raises(DataError):
            list(iter_cdr_file(str(tmp_path / "nope.csv")))

    def test_header_comments_blank_ignored(self, tmp_path):
        p = tmp_path / "cdr.csv"
        p.write_text(
            "origin_id,dest_id,timestamp_utc,duration_s,origin_bts,dest_bts\n"
            "# a comment\n"
            "\n"
            "a1,b2,2009-11-03T14:00:00Z,60,T001,\n"
        )
        records, diags = parse_cdr_file(str(p))
        assert diags == []
        assert len(records) == 1
        assert records[0].dest_bts is None

    def test_explicit_offset_normalised_to_utc(self):
        dt = parse_timestamp("2009-11-03T08:00:00-06:00")
        assert dt == T0

    def test_parse_never_invents_records(self, tmp_path):
        rng = random.Random(7)
        lines = []
        for i in range(200):
            if rng.random() < 0.3:
                lines.append(f"bad line {i}")
            else:
                lines.append(f"a{i},b{i},2009-11-03T14:00:00Z,60,T00{i % 9},")
        p = tmp_path / "cdr.csv"
        p.write_text("\n".join(lines) + "\n")
        records, diags = parse_cdr_file(str(p))
        assert len(records) + len(diags) == 200


class TestRoundTrip:
    def test_export_parse_export_identical(self, tmp_path):
        rng = random.Random(42)
        records = random_records(rng, 300)
        p1 = tmp_path / "a.csv"
        p2 = tmp_path / "b.csv"
        export_cdr_csv(records, str(p1))
        parsed, diags = parse_cdr_file(str(p1), strict=True)
        assert parsed == records
        export_cdr_csv(parsed, str(p2))
        assert p1.read_bytes() == p2.read_bytes()

    def test_messy_input_canonicalised(self, tmp_path):
        p = tmp_path / "messy.csv"
        p.write_text(
            "# exported by upstream tool\n"
            "origin_id,dest_id,timestamp_utc,duration_s,origin_bts,dest_bts\n"
            "a1,b2,2009-11-03T08:00:00-06:00,60,T001,T002\n"
        )
        records, _ = parse_cdr_file(str(p))
        out = tmp_path / "canon.csv"
        export_cdr_csv(records, str(out))
        assert out.read_text() == (
            "origin_id,dest_id,timestamp_utc,duration_s,origin_bts,dest_bts\n"
            "a1,b2,2009-11-03T14:00:00Z,60,T001,T002\n"
        )


class TestRegistry:
    def test_basic(self, tmp_path):
        p = tmp_path / "bts.csv"
        p.write_text("bts_id,lat,lon\nT001,17.98,-93.38\n")
        registry = parse_bts_registry(str(p))
        assert registry == {"T001": BtsSite("T001", 17.98, -93.38)}

    def test_duplicate_id_fatal(self, tmp_path):
        p = tmp_path / "bts.csv"
        p.write_text("T001,17.98,-93.38\nT001,18.0,-93.0\n")
        with pytest.raises(DataError, match="duplicate bts_id 'T001'"):
            parse_bts_registry(str(p))

    def test_lat_out_of_range_fatal(self, tmp_path):
        p = tmp_path / "bts.csv"
        p.write_text("T002,95.0,0.0\n")
        with pytest.raises(DataError, match="latitude"):
            parse_bts_registry(str(p))

    def test_lon_out_of_range_fatal(self, tmp_path):
        p = tmp_path / "bts.csv"
        p.write_text("T002,10.0,181.0\n")
        with pytest.raises(DataError, match="longitude"):
            parse_bts_registry(str(p))


def make_registry(coords):
    return {b: BtsSite(b, lat, lon) for b, (lat, lon) in coords.items()}


class TestFilterBbox:
    BOX = BBox(17.0, 19.0, -94.0, -92.0)

    def test_inside_kept(self):
        registry = make_registry({"T1": (18.0, -93.0)})
        rec = CdrRecord("a", "b", T0, 1, "T1", None)
        kept, quarantine = filter_bbox([rec], registry, self.BOX)
        assert kept == [rec]
        assert quarantine == []

    def test_both_outside_dropped(self):
        registry = make_registry({"T1": (10.0, -93.0), "T2": (18.0, -80.0)})
        rec = CdrRecord("a", "b", T0, 1, "T1", "T2")
        kept, quarantine = filter_bbox([rec], registry, self.BOX)
        assert kept == []
        assert quarantine == []

    def test_unknown_tower_quarantined_not_dropped_silently(self):
        registry = make_registry({"T1": (18.0, -93.0)})
        rec = CdrRecord("a", "b", T0, 1, "TX", "T1")
        kept, quarantine = filter_bbox([rec], registry, self.BOX)
        assert kept == [rec]  # kept through its known dest tower
        assert quarantine == [(rec, ("TX",))]

    def test_degenerate_bbox_rejected(self):
        with pytest.raises(ValueError):
            BBox(2.0, 1.0, 0.0, 1.0)

    def test_matches_bruteforce_oracle(self):
        rng = random.Random(13)
        coords = {
            f"T{i:03d}": (rng.uniform(15, 21), rng.uniform(-96, -90)) for i in range(30)
        }
        registry = make_registry(coords)
        records = random_records(rng, 500, n_towers=30)
        kept, _ = filter_bbox(records, registry, self.BOX)

        def inside(tower):
            if tower not in coords:
                return False
            lat, lon = coords[tower]
            return 17.0 <= lat <= 19.0 and -94.0 <= lon <= -92.0

        expected = [
            r for r in records if inside(r.origin_bts) or (r.dest_bts and inside(r.dest_bts))
        ]
        assert kept == expected

    def test_idempotent(self):
        rng = random.Random(99)
        coords = {
            f"T{i:03d}": (rng.uniform(15, 21), rng.uniform(-96, -90)) for i in range(30)
        }
        registry = make_registry(coords)
        records = random_records(rng, 400, n_towers=30)
        once, _ = filter_bbox(records, registry, self.BOX)
        twice, _ = filter_bbox(once, registry, self.BOX)
        assert twice == once
