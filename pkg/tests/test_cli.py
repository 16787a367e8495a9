import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import make_ct_series, pixel_payloads
from pvcorrect import BinaryMask, GridGeometry, ScalarVolume
from pvcorrect.cli import main
from pvcorrect.io import read_raw, write_raw


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def last_json(out):
    return json.loads(out.strip().splitlines()[-1])


@pytest.fixture
def cube_files(tmp_path, cube_case):
    volume, mask = cube_case
    write_raw(volume, tmp_path / "ct.raw")
    write_raw(mask, tmp_path / "mask.raw")
    return tmp_path


class TestCorrect:
    def test_cube(self, capsys, cube_files):
        code, out, _ = run(capsys, "correct", "-i", cube_files / "ct.raw",
                           "-m", cube_files / "mask.raw", "-o", cube_files / "out.raw")
        assert code == 0
        rec = last_json(out)
        assert rec["surface_count"] == 26 and rec["raised_count"] == 26
        assert np.all(read_raw(cube_files / "out.raw").values == 1500.0)

    def test_sheet_unchanged(self, capsys, tmp_path, sheet_case):
        volume, mask = sheet_case
        write_raw(volume, tmp_path / "ct.raw", "float64")
        write_raw(mask, tmp_path / "mask.raw")
        code, out, _ = run(capsys, "correct", "-i", tmp_path / "ct.raw",
                           "-m", tmp_path / "mask.raw", "-o", tmp_path / "out.raw")
        assert code == 0
        rec = last_json(out)
        assert rec["uncorrectable_count"] == rec["surface_count"] == mask.count
        assert (tmp_path / "out.raw").read_bytes() == (tmp_path / "ct.raw").read_bytes()

    def test_jsonl_appends(self, capsys, cube_files):
        args = ["correct", "-i", cube_files / "ct.raw", "-m", cube_files / "mask.raw",
                "-o", cube_files / "out.raw", "--jsonl", cube_files / "runs.jsonl"]
        run(capsys, *args)
        run(capsys, *args)
        lines = (cube_files / "runs.jsonl").read_text().splitlines()
        assert len(lines) == 2 and json.loads(lines[0]) == json.loads(lines[1])

    def test_missing_mask_is_usage_error(self, capsys, cube_files):
        with pytest.raises(SystemExit) as info:
            main(["correct", "-i", str(cube_files / "ct.raw"),
                  "-m", str(cube_files / "nope.raw"), "-o", str(cube_files / "o.raw")])
        assert info.value.code == 2
        assert "nope.raw" in capsys.readouterr().err

    def test_missing_option_is_usage_error(self, capsys, cube_files):
        with pytest.raises(SystemExit) as info:
            main(["correct", "-i", str(cube_files / "ct.raw")])
        assert info.value.code == 2

    def test_misaligned_mask_is_processing_error(self, capsys, cube_files):
        write_raw(BinaryMask(GridGeometry((3, 3, 4)), np.ones((3, 3, 4))),
                  cube_files / "big.raw")
        code, _, err = run(capsys, "correct", "-i", cube_files / "ct.raw",
                           "-m", cube_files / "big.raw", "-o", cube_files / "o.raw")
        assert code == 1 and err.startswith("error:")

    def test_corrupt_input_is_processing_error(self, capsys, cube_files):
        (cube_files / "bad.raw").write_bytes(b"garbage")
        code, _, err = run(capsys, "correct", "-i", cube_files / "bad.raw",
                           "-m", cube_files / "mask.raw", "-o", cube_files / "o.raw")
        assert code == 1 and "magic" in err

    def test_config_file_and_override(self, capsys, cube_files):
        cfg = cube_files / "cfg.json"
        cfg.write_text(json.dumps({"input": str(cube_files / "ct.raw"),
                                   "mask": str(cube_files / "mask.raw"),
                                   "output": str(cube_files / "o.raw"), "power": 3.0}))
        code, out, _ = run(capsys, "correct", "--config", cfg)
        assert code == 0 and last_json(out)["power"] == 3.0
        code, out, _ = run(capsys, "correct", "--config", cfg, "--power", "1.5")
        assert last_json(out)["power"] == 1.5

    def test_unknown_config_key(self, capsys, cube_files):
        cfg = cube_files / "cfg.json"
        cfg.write_text(json.dumps({"colour": "red"}))
        with pytest.raises(SystemExit) as info:
            main(["correct", "--config", str(cfg)])
        assert info.value.code == 2

    def test_deterministic_across_workers(self, capsys, tmp_path, monkeypatch):
        import pvcorrect.pvc as pvc_mod
        monkeypatch.setattr(pvc_mod, "MIN_CHUNK", 1)
        rng = np.random.default_rng(5)
        g = GridGeometry((20, 18, 9), (0.488, 0.488, 1.0))
        write_raw(ScalarVolume(g, rng.normal(800, 400, g.dims)), tmp_path / "ct.raw", "float64")
        write_raw(BinaryMask(g, rng.random(g.dims) < 0.8), tmp_path / "m.raw")
        outs = []
        for w in (1, 3, 8):
            run(capsys, "correct", "-i", tmp_path / "ct.raw", "-m", tmp_path / "m.raw",
                "-o", tmp_path / f"o{w}.raw", "--workers", w)
            outs.append((tmp_path / f"o{w}.raw").read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_dicom_round_trip(self, capsys, tmp_path):
        stored = np.full((6, 6, 5), 1024, np.int16)  # 0 HU
        stored[1:5, 1:5, 1:4] = 1824  # 800 HU shell
        stored[2:4, 2:4, 2] = 2524  # 1500 HU core
        make_ct_series(tmp_path / "ct", stored)
        make_ct_series(tmp_path / "seg", (stored > 1024).astype(np.int16), intercept=0.0)
        code, out, _ = run(capsys, "correct", "-i", tmp_path / "ct", "-m", tmp_path / "seg",
                           "-o", tmp_path / "out")
        assert code == 0 and last_json(out)["raised_count"] > 0
        assert sorted(pixel_payloads(tmp_path / "out")) == sorted(pixel_payloads(tmp_path / "ct"))
        run(capsys, "correct", "-i", tmp_path / "ct", "-m", tmp_path / "seg",
            "-o", tmp_path / "out2")
        for name in pixel_payloads(tmp_path / "out"):
            assert (tmp_path / "out" / name).read_bytes() == \
                (tmp_path / "out2" / name).read_bytes()


class TestPhantom:
    def test_standard_suite(self, capsys, tmp_path):
        code, _, _ = run(capsys, "phantom", "-o", tmp_path / "r.csv")
        assert code == 0
        rows = (tmp_path / "r.csv").read_text().splitlines()
        assert len(rows) == 4
        assert all(float(r.split(",")[6]) > 0 for r in rows[1:])

    def test_zero_psf_warns(self, capsys, tmp_path):
        suite = tmp_path / "s.ini"
        suite.write_text("[flat]\ndims = 24\nspacing = 0.5\nouter_radius = 4\n"
                         "cortical_thickness = 1\nlength = 6\npsf_sigma = 0\n")
        code, out, err = run(capsys, "phantom", "--suite", suite)
        assert code == 0
        assert "warning" in err and "flat" in err
        assert out.splitlines()[1].endswith(",1.000000,1")

    def test_empty_suite(self, capsys, tmp_path):
        (tmp_path / "e.ini").write_text("")
        code, _, err = run(capsys, "phantom", "--suite", tmp_path / "e.ini")
        assert code == 1 and "no cases" in err


class TestMaterial:
    @pytest.fixture
    def bone(self, tmp_path):
        rng = np.random.default_rng(9)
        g = GridGeometry((16, 16, 8), (0.488, 0.488, 1.0))
        hu = rng.uniform(200, 2400, g.dims)
        write_raw(ScalarVolume(g, hu), tmp_path / "ct.raw", "float64")
        write_raw(BinaryMask(g, np.ones(g.dims)), tmp_path / "m.raw")
        return tmp_path

    def rows(self, out):
        return [line.split() for line in out.splitlines() if not line.startswith("#")]

    def test_specimen_law(self, capsys, bone):
        code, out, _ = run(capsys, "material", "-i", bone / "ct.raw", "-m", bone / "m.raw",
                           "--calibration-slope", "0.0008", "--specimen", "3",
                           "--threshold-density", "1.0")
        assert code == 0
        rows = self.rows(out)
        assert len(rows) == 200
        e = [float(r[5]) for r in rows]
        assert e == sorted(e) and max(e) <= 20000.0

    def test_constant_volume_single_bin(self, capsys, tmp_path):
        g = GridGeometry((4, 4, 4))
        write_raw(ScalarVolume(g, np.full(g.dims, 1250.0)), tmp_path / "ct.raw")
        write_raw(BinaryMask(g, np.ones(g.dims)), tmp_path / "m.raw")
        code, out, err = run(capsys, "material", "-i", tmp_path / "ct.raw",
                             "-m", tmp_path / "m.raw", "--calibration-slope", "0.001",
                             "--law-a", "10000", "--law-b", "1.5",
                             "--threshold-density", "1.0")
        assert code == 0 and "no trabecular" in err
        occupied = [r for r in self.rows(out) if int(r[4])]
        assert len(occupied) == 1 and int(occupied[0][4]) == 64

    def test_threshold_out_of_range(self, capsys, bone):
        code, out, err = run(capsys, "material", "-i", bone / "ct.raw", "-m", bone / "m.raw",
                             "--calibration-slope", "0.0008", "--specimen", "4",
                             "--threshold-density", "50", "-o", bone / "t.txt")
        assert code == 0 and "no cortical" in err
        assert len(self.rows((bone / "t.txt").read_text())) == 100

    def test_negative_density(self, capsys, bone):
        args = ["material", "-i", bone / "ct.raw", "-m", bone / "m.raw",
                "--calibration-slope", "0.001", "--calibration-intercept", "-0.5",
                "--specimen", "3", "--threshold-density", "1.0"]
        code, _, err = run(capsys, *args)
        assert code == 1 and "non-negative" in err
        code, _, _ = run(capsys, *args, "--clip-negative-density")
        assert code == 0

    def test_missing_law(self, capsys, bone):
        with pytest.raises(SystemExit) as info:
            main(["material", "-i", str(bone / "ct.raw"), "-m", str(bone / "m.raw"),
                  "--calibration-slope", "0.001", "--threshold-density", "1"])
        assert info.value.code == 2


def test_info(capsys, cube_files):
    code, out, _ = run(capsys, "info", "-i", cube_files / "ct.raw")
    assert code == 0
    assert "dims:" in out and "(3, 3, 3)" in out and "HU range" in out


def test_module_entry_point(cube_files):
    proc = subprocess.run([sys.executable, "-m", "pvcorrect", "info", "-i",
                           str(cube_files / "mask.raw")], capture_output=True, text=True)
    assert proc.returncode == 0 and "mask" in proc.stdout
