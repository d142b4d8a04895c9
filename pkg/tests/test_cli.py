"""End-to-end tests for the command line interface."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from laneguide import Lane, read_culane_file, read_scene_file
from laneguide.cli import main


def run(*argv) -> int:
    return main([str(a) for a in argv])


def read_report(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["metric", "value"]
    return {k: v for k, v in rows[1:]}


class TestSynth:
    def test_writes_scene_files_and_config_echo(self, tmp_path):
        out = tmp_path / "scenes"
        assert run("synth", "--count", 3, "--out", out) == 0
        names = sorted(p.name for p in out.glob("*.json"))
        assert names == ["config.json", "scene00000.json",
                         "scene00001.json", "scene00002.json"]
        echo = json.loads((out / "config.json").read_text())
        assert echo["count"] == 3
        assert echo["rng"] == "numpy-philox4x64"
        assert echo["scene"]["canvas"] == {"w": 800, "h": 320}

    def test_deterministic_for_same_config(self, tmp_path):
        for d in ("a", "b"):
            assert run("synth", "--count", 2, "--out", tmp_path / d) == 0
        for name in ("scene00000.json", "scene00001.json"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_config_sections_respected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({
            "count": 2,
            "scene": {"canvas": {"w": 400, "h": 240}, "lanes_min": 1,
                      "lanes_max": 1, "seed": 9},
        }))
        out = tmp_path / "scenes"
        assert run("synth", "--config", cfg, "--out", out) == 0
        lanes, canvas = read_scene_file(out / "scene00000.json")
        assert (canvas.w, canvas.h) == (400, 240)
        assert len(lanes) == 1

    def test_unknown_config_key_is_data_error(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"scene": {"bogus": 1}}')
        assert run("synth", "--config", cfg, "--out", tmp_path / "s") == 1
        assert "bogus" in capsys.readouterr().err


class TestPipeline:
    @pytest.fixture()
    def scenes(self, tmp_path):
        out = tmp_path / "scenes"
        assert run("synth", "--count", 4, "--out", out) == 0
        return out

    def test_encode_decode_eval_round(self, scenes, tmp_path):
        targets = tmp_path / "targets"
        preds = tmp_path / "preds"
        report = tmp_path / "out" / "report.csv"
        assert run("encode", "--scenes", scenes, "--out", targets) == 0
        index = json.loads((targets / "index.json").read_text())
        assert index["meta"]["guide"]["kind"] == "rect"
        assert run("decode", "--targets", targets, "--out", preds) == 0
        pred_files = sorted(preds.glob("*.lines.txt"))
        assert [p.name for p in pred_files] == [
            f"scene{i:05d}.lines.txt" for i in range(4)]
        assert run("eval", "--preds", preds, "--gts", scenes,
                   "--out", report) == 0
        values = read_report(report)
        assert values["f1"] == "1.000000"
        assert values["fp"] == "0"
        assert report.with_suffix(".png").stat().st_size > 0

    def test_eval_culane_gts_need_canvas(self, scenes, tmp_path, capsys):
        # convert ground truth scenes to bare .lines.txt: canvas is gone
        gts = tmp_path / "gts"
        gts.mkdir()
        for p in sorted(scenes.glob("scene*.json")):
            lanes, canvas = read_scene_file(p)
            from laneguide import write_culane_file
            write_culane_file(gts / (p.stem + ".lines.txt"), lanes)
        targets = tmp_path / "targets"
        preds = tmp_path / "preds"
        run("encode", "--scenes", scenes, "--out", targets)
        run("decode", "--targets", targets, "--out", preds)
        assert run("eval", "--preds", preds, "--gts", gts,
                   "--out", tmp_path / "r.csv") == 1
        assert "canvas" in capsys.readouterr().err
        assert run("eval", "--preds", preds, "--gts", gts, "--canvas", "800x320",
                   "--out", tmp_path / "r.csv") == 0
        assert read_report(tmp_path / "r.csv")["f1"] == "1.000000"

    def test_eval_unpaired_ids_rejected(self, scenes, tmp_path, capsys):
        preds = tmp_path / "preds"
        preds.mkdir()
        (preds / "other.lines.txt").write_text("1.0 2.0 3.0 4.0\n")
        assert run("eval", "--preds", preds, "--gts", scenes,
                   "--out", tmp_path / "r.csv") == 1
        assert "pair" in capsys.readouterr().err

    def test_decode_honors_decoder_config(self, scenes, tmp_path):
        targets = tmp_path / "targets"
        run("encode", "--scenes", scenes, "--out", targets)
        cfg = tmp_path / "cfg.json"
        cfg.write_text('{"decoder": {"peak_threshold": 0.99}}')
        preds = tmp_path / "preds"
        assert run("decode", "--targets", targets, "--config", cfg,
                   "--out", preds) == 0
        total = sum(len(read_culane_file(p)) for p in preds.glob("*.lines.txt"))
        assert total == 0  # threshold above every stamp peak


class TestAngleStats:
    def test_histogram_csv_and_png(self, tmp_path):
        scenes = tmp_path / "scenes"
        run("synth", "--count", 5, "--out", scenes)
        out = tmp_path / "hist.csv"
        assert run("angle-stats", "--scenes", scenes, "--edges", "0,45,90",
                   "--out", out) == 0
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["bucket_lo", "bucket_hi", "count"]
        assert [r[:2] for r in rows[1:]] == [["0", "45"], ["45", "90"]]
        gt_total = sum(len(read_scene_file(p)[0])
                       for p in scenes.glob("scene*.json"))
        assert sum(int(r[2]) for r in rows[1:]) == gt_total
        assert out.with_suffix(".png").stat().st_size > 0

    def test_recall_column_with_preds(self, tmp_path):
        scenes = tmp_path / "scenes"
        run("synth", "--count", 3, "--out", scenes)
        targets = tmp_path / "targets"
        preds = tmp_path / "preds"
        run("encode", "--scenes", scenes, "--out", targets)
        run("decode", "--targets", targets, "--out", preds)
        out = tmp_path / "hist.csv"
        assert run("angle-stats", "--scenes", scenes, "--preds", preds,
                   "--out", out) == 0
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0][-1] == "recall"
        for row in rows[1:]:
            assert row[-1] == "1.000000" or row[2] == "0"

    def test_bad_edges_is_data_error(self, tmp_path, capsys):
        scenes = tmp_path / "scenes"
        run("synth", "--count", 1, "--out", scenes)
        assert run("angle-stats", "--scenes", scenes, "--edges", "0,nope,90",
                   "--out", tmp_path / "h.csv") == 1
        assert "edges" in capsys.readouterr().err


class TestRoundtrip:
    def test_zero_noise_report_is_perfect(self, tmp_path):
        out = tmp_path / "rt"
        assert run("roundtrip", "--count", 3, "--out", out / "report.csv") == 0
        values = read_report(out / "report.csv")
        assert values["scenes"] == "3"
        assert values["f1"] == "1.000000"
        with open(out / "buckets.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["bucket_lo", "bucket_hi", "gt_count", "recall"]
        assert len(rows) == 4
        for name in ("report.png", "buckets.png"):
            assert (out / name).stat().st_size > 0
        # artifacts round-trip through the on-disk formats
        for p in sorted((out / "preds").glob("*.lines.txt")):
            for lane in read_culane_file(p):
                assert lane.points.shape[1] == 2

    def test_noise_config_lowers_score(self, tmp_path):
        noise = tmp_path / "noise.json"
        noise.write_text('{"noise": {"gaussian_sigma": 0.6, "dropout_prob": 0.4}}')
        out = tmp_path / "rt" / "report.csv"
        assert run("roundtrip", "--count", 3, "--noise", noise, "--out", out) == 0
        assert float(read_report(out)["f1"]) < 1.0


class TestParallelJobs:
    def test_encode_jobs_emit_identical_artifacts(self, tmp_path):
        scenes = tmp_path / "scenes"
        run("synth", "--count", 4, "--out", scenes)
        for jobs, name in ((1, "t1"), (2, "t2")):
            assert run("encode", "--scenes", scenes, "--jobs", jobs,
                       "--out", tmp_path / name) == 0
        files1 = sorted(p.relative_to(tmp_path / "t1")
                        for p in (tmp_path / "t1").rglob("*") if p.is_file())
        files2 = sorted(p.relative_to(tmp_path / "t2")
                        for p in (tmp_path / "t2").rglob("*") if p.is_file())
        assert files1 == files2 and files1
        for rel in files1:
            assert (tmp_path / "t1" / rel).read_bytes() == \
                (tmp_path / "t2" / rel).read_bytes()

    def test_roundtrip_jobs_emit_identical_reports(self, tmp_path):
        noise = tmp_path / "noise.json"
        noise.write_text('{"noise": {"gaussian_sigma": 0.2, "seed": 5}}')
        for jobs, name in ((1, "r1"), (2, "r2")):
            assert run("roundtrip", "--count", 4, "--noise", noise,
                       "--jobs", jobs,
                       "--out", tmp_path / name / "report.csv") == 0
        for rel in ("report.csv", "buckets.csv", "preds/scene00003.lines.txt",
                    "scenes/scene00002.json"):
            assert (tmp_path / "r1" / rel).read_bytes() == \
                (tmp_path / "r2" / rel).read_bytes()

    def test_zero_jobs_rejected(self, tmp_path, capsys):
        scenes = tmp_path / "scenes"
        run("synth", "--count", 2, "--out", scenes)
        assert run("encode", "--scenes", scenes, "--jobs", 0,
                   "--out", tmp_path / "t") == 1
        assert "jobs" in capsys.readouterr().err


class TestErrors:
    def test_unknown_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run("bogus")
        assert exc.value.code == 2

    def test_missing_required_flag_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            run("synth")
        assert exc.value.code == 2

    def test_missing_input_dir_is_data_error(self, tmp_path, capsys):
        assert run("encode", "--scenes", tmp_path / "nothing",
                   "--out", tmp_path / "t") == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_malformed_scene_json_names_file(self, tmp_path, capsys):
        scenes = tmp_path / "scenes"
        scenes.mkdir()
        (scenes / "scene00000.json").write_text("{not json")
        assert run("encode", "--scenes", scenes, "--out", tmp_path / "t") == 1
        assert "error:" in capsys.readouterr().err

    def test_bad_canvas_flag(self, tmp_path, capsys):
        preds = tmp_path / "p"
        preds.mkdir()
        (preds / "a.lines.txt").write_text("1.0 2.0 3.0 4.0\n")
        assert run("eval", "--preds", preds, "--gts", preds, "--canvas", "big",
                   "--out", tmp_path / "r.csv") == 1
        assert "canvas" in capsys.readouterr().err


def test_cli_alias_returns_exit_codes(tmp_path):
    from laneguide.cli import cli
    assert cli(["synth", "--count", "1", "--out", str(tmp_path / "s")]) == 0
    assert cli(["decode", "--targets", str(tmp_path / "missing"),
                "--out", str(tmp_path / "p")]) == 1
