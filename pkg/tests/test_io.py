"""Serialization round-trips and format validation."""
import datetime as dt
import json
import math

import numpy as np
import pytest

from watermap import io
from watermap.core import (
    AreaRecord,
    ClassLabel,
    FormatError,
    Grid,
    ManifestEntry,
    SensorKind,
)
from conftest import JUNE, labels_map, scene_from_cube, uniform_scene, WATER


class TestGridIO:
    def test_roundtrip(self, tmp_path):
        g = Grid(np.arange(12, dtype=np.float32).reshape(3, 4), 30.0, -1.0)
        path = tmp_path / "g.f32"
        io.write_grid(g, path)
        back = io.read_grid(path)
        np.testing.assert_array_equal(back.data, g.data)
        assert back.pixel_size_m == 30.0
        assert back.nodata_value == -1.0

    def test_reruns_are_byte_identical(self, tmp_path):
        g = Grid(np.arange(6, dtype=np.float32).reshape(2, 3))
        io.write_grid(g, tmp_path / "a.f32")
        io.write_grid(g, tmp_path / "b.f32")
        assert (tmp_path / "a.f32").read_bytes() == (tmp_path / "b.f32").read_bytes()
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_length_mismatch_rejected(self, tmp_path):
        g = Grid(np.zeros((2, 3), dtype=np.float32))
        path = tmp_path / "g.f32"
        io.write_grid(g, path)
        path.write_bytes(path.read_bytes()[:-4])  # truncate one sample
        with pytest.raises(FormatError, match="header implies"):
            io.read_grid(path)

    def test_missing_sidecar_rejected(self, tmp_path):
        path = tmp_path / "g.f32"
        path.write_bytes(b"\0" * 16)
        with pytest.raises(FormatError, match="sidecar"):
            io.read_grid(path)

    def test_malformed_sidecar_reports_line(self, tmp_path):
        path = tmp_path / "g.f32"
        path.write_bytes(b"\0" * 16)
        (tmp_path / "g.json").write_text("{\n  broken\n}")
        with pytest.raises(FormatError, match="line 2"):
            io.read_grid(path)

    def test_roi_reads_nonzero_as_inside(self, tmp_path):
        g = Grid(np.array([[0.0, 1.0], [-9999.0, 2.0]], dtype=np.float32))
        io.write_grid(g, tmp_path / "roi.f32")
        roi = io.read_roi(tmp_path / "roi.f32")
        assert roi.tolist() == [[False, True], [False, True]]


class TestSceneIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(11)
        cube = rng.uniform(0, 1, size=(6, 5, 7)).astype(np.float32)
        scene = scene_from_cube(cube, sensor=SensorKind.OLI, scene_id="sc-01")
        io.write_scene(scene, tmp_path / "sc-01")
        back = io.read_scene(tmp_path / "sc-01")
        assert back.scene_id == "sc-01"
        assert back.sensor == SensorKind.OLI
        assert back.date == scene.date
        np.testing.assert_array_equal(back.band_cube(), cube)

    def test_roundtrip_many_random_scenes(self, tmp_path):
        rng = np.random.default_rng(7)
        for i in range(25):
            h, w = int(rng.integers(1, 9)), int(rng.integers(1, 9))
            cube = rng.uniform(0, 1.5, size=(6, h, w)).astype(np.float32)
            scene = scene_from_cube(cube, scene_id=f"s{i}")
            io.write_scene(scene, tmp_path / f"s{i}")
            back = io.read_scene(tmp_path / f"s{i}")
            np.testing.assert_array_equal(back.band_cube(), cube)

    def test_missing_band_role_rejected(self, tmp_path):
        scene = uniform_scene(WATER, 2, 2)
        io.write_scene(scene, tmp_path / "s")
        sidecar = json.loads((tmp_path / "s.json").read_text())
        sidecar["bands"] = ["blue", "green", "red", "nir", "swir1", "swir1"]
        (tmp_path / "s.json").write_text(json.dumps(sidecar))
        with pytest.raises(FormatError, match="missing band roles.*swir2"):
            io.read_scene(tmp_path / "s")

    def test_unknown_sensor_rejected(self, tmp_path):
        scene = uniform_scene(WATER, 2, 2)
        io.write_scene(scene, tmp_path / "s")
        sidecar = json.loads((tmp_path / "s.json").read_text())
        sidecar["sensor"] = "MSS"
        (tmp_path / "s.json").write_text(json.dumps(sidecar))
        with pytest.raises(FormatError, match="unknown sensor 'MSS'"):
            io.read_scene(tmp_path / "s")

    def test_band_order_follows_sidecar(self, tmp_path):
        scene = uniform_scene(WATER, 1, 1)
        io.write_scene(scene, tmp_path / "s")
        sidecar = json.loads((tmp_path / "s.json").read_text())
        sidecar["bands"] = list(reversed(sidecar["bands"]))
        (tmp_path / "s.json").write_text(json.dumps(sidecar))
        back = io.read_scene(tmp_path / "s")
        # raw bytes unchanged, so roles are now assigned in reversed order
        assert back.bands[list(back.bands)[0]].data[0, 0] == np.float32(WATER[0])
        assert back.band_cube()[0, 0, 0] == np.float32(WATER[5])


class TestClassMapIO:
    def test_roundtrip(self, tmp_path):
        m = labels_map([[0, 1, 2], [3, 255, 0]], scene_id="m1")
        io.write_classmap(m, tmp_path / "m1.class")
        back = io.read_classmap(tmp_path / "m1.class")
        assert back.scene_id == "m1"
        assert back.date == m.date
        np.testing.assert_array_equal(back.labels, m.labels)

    def test_unknown_code_rejected(self, tmp_path):
        m = labels_map([[0, 1]])
        io.write_classmap(m, tmp_path / "m.class")
        raw = bytearray((tmp_path / "m.class").read_bytes())
        raw[1] = 7
        (tmp_path / "m.class").write_bytes(bytes(raw))
        with pytest.raises(FormatError, match=r"unknown class codes \[7\]"):
            io.read_classmap(tmp_path / "m.class")

    def test_truncated_rejected(self, tmp_path):
        m = labels_map([[0, 1], [1, 0]])
        io.write_classmap(m, tmp_path / "m.class")
        p = tmp_path / "m.class"
        p.write_bytes(p.read_bytes()[:-1])
        with pytest.raises(FormatError, match="header implies"):
            io.read_classmap(p)


class TestManifestIO:
    def entries(self):
        return [
            ManifestEntry("s1", dt.date(2001, 5, 1), SensorKind.TM, "s1"),
            ManifestEntry("s2", dt.date(2001, 6, 2), SensorKind.OLI, "s2"),
        ]

    def test_roundtrip_resolves_relative_paths(self, tmp_path):
        io.write_manifest(self.entries(), tmp_path / "m.csv")
        m = io.read_manifest(tmp_path / "m.csv")
        assert [e.scene_id for e in m] == ["s1", "s2"]
        assert m.entries[0].path == str(tmp_path / "s1")
        assert m.entries[1].sensor == SensorKind.OLI

    def test_header_enforced(self, tmp_path):
        (tmp_path / "m.csv").write_text("id,when,sat,where\n")
        with pytest.raises(FormatError, match="expected header"):
            io.read_manifest(tmp_path / "m.csv")

    def test_unsorted_rejected(self, tmp_path):
        (tmp_path / "m.csv").write_text(
            "scene_id,date,sensor,path\ns2,2001-06-02,TM,s2\ns1,2001-05-01,TM,s1\n"
        )
        with pytest.raises(FormatError, match="out of order"):
            io.read_manifest(tmp_path / "m.csv")

    def test_bad_date_rejected(self, tmp_path):
        (tmp_path / "m.csv").write_text(
            "scene_id,date,sensor,path\ns1,06/01/2001,TM,s1\n"
        )
        with pytest.raises(FormatError, match="bad ISO date"):
            io.read_manifest(tmp_path / "m.csv")


class TestAreaCsv:
    def records(self):
        return [
            AreaRecord(dt.date(2001, 5, 1), 57.3, 0.125, 1.0),
            AreaRecord(dt.date(2001, 9, 1), 151.6, float("nan"), 0.75),
        ]

    def test_roundtrip(self, tmp_path):
        io.write_area_csv(self.records(), tmp_path / "a.csv")
        back = io.read_area_csv(tmp_path / "a.csv")
        assert back[0].water_area_km2 == pytest.approx(57.3)
        assert back[0].division_index == pytest.approx(0.125)
        assert math.isnan(back[1].division_index)
        assert back[1].valid_fraction == pytest.approx(0.75)

    def test_format_is_fixed_decimal_iso_dates(self, tmp_path):
        io.write_area_csv(self.records(), tmp_path / "a.csv")
        lines = (tmp_path / "a.csv").read_text().splitlines()
        assert lines[0] == "date,water_area_km2,division_index,valid_fraction"
        assert lines[1] == "2001-05-01,57.300000,0.125000,1.000000"
        assert lines[2] == "2001-09-01,151.600000,nan,0.750000"

    def test_out_of_order_rejected(self, tmp_path):
        recs = list(reversed(self.records()))
        with pytest.raises(FormatError, match="out of order"):
            io.write_area_csv(recs, tmp_path / "a.csv")


class TestSamplesCsv:
    def test_reads_and_validates(self, tmp_path):
        (tmp_path / "s.csv").write_text("row,col,truth\n0,1,water\n2,3,Land\n")
        rows = io.read_samples_csv(tmp_path / "s.csv")
        assert rows == [(0, 1, ClassLabel.WATER), (2, 3, ClassLabel.LAND)]

    def test_bad_truth_rejected(self, tmp_path):
        (tmp_path / "s.csv").write_text("row,col,truth\n0,1,swamp\n")
        with pytest.raises(FormatError, match="'water' or 'land'"):
            io.read_samples_csv(tmp_path / "s.csv")


class TestKvConfig:
    def test_parses_comments_and_blanks(self, tmp_path):
        (tmp_path / "c.cfg").write_text(
            "# thresholds\n\ntc4_threshold = -0.05\nwindow=7\n"
        )
        assert io.read_kv_config(tmp_path / "c.cfg") == {
            "tc4_threshold": "-0.05",
            "window": "7",
        }

    def test_duplicate_key_rejected(self, tmp_path):
        (tmp_path / "c.cfg").write_text("a=1\na=2\n")
        with pytest.raises(FormatError, match="duplicate key"):
            io.read_kv_config(tmp_path / "c.cfg")

    def test_non_kv_line_rejected(self, tmp_path):
        (tmp_path / "c.cfg").write_text("just words\n")
        with pytest.raises(FormatError, match="key=value"):
            io.read_kv_config(tmp_path / "c.cfg")
