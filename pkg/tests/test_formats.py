import numpy as np
import pytest

from laneguide.decoder import DecoderConfig, decode_scene
from laneguide.errors import DomainError, ParseError
from laneguide.formats import (
    parse_culane_lines,
    read_culane_file,
    read_heatmap_pgm,
    read_scene_file,
    save_targets,
    load_targets,
    scene_from_json,
    scene_to_json,
    write_culane_file,
    write_culane_lines,
    write_heatmap_pgm,
    write_scene_file,
)
from laneguide.geometry import CanvasDims, GuideKind, Lane, make_guide_line
from laneguide.targets import GridSpec, TargetConfig, encode_scene

CANVAS = CanvasDims(800, 320)


def random_lanes(rng, count, max_points=12):
    lanes = []
    for _ in range(count):
        n = int(rng.integers(2, max_points + 1))
        pts = rng.uniform(0.0, 800.0, size=(n, 2))
        pts[:, 1] *= 0.4
        # nudge consecutive duplicates apart
        for i in range(1, n):
            if np.allclose(pts[i], pts[i - 1]):
                pts[i, 0] += 0.5
        lanes.append(Lane(pts))
    return lanes


class TestSceneJson:
    def test_round_trip_exact(self):
        rng = np.random.default_rng(3)
        lanes = random_lanes(rng, 1000)
        text = scene_to_json(lanes, CANVAS)
        back, canvas = scene_from_json(text)
        assert canvas == CANVAS
        assert len(back) == len(lanes)
        for a, b in zip(lanes, back):
            assert np.max(np.abs(a.points - b.points)) <= 1e-6

    def test_file_round_trip(self, tmp_path):
        lanes = random_lanes(np.random.default_rng(4), 5)
        path = tmp_path / "scene.json"
        write_scene_file(path, lanes, CANVAS)
        back, canvas = read_scene_file(path)
        assert canvas == CANVAS
        for a, b in zip(lanes, back):
            assert np.array_equal(a.points, b.points)

    def test_empty_scene(self):
        back, canvas = scene_from_json(scene_to_json([], CANVAS))
        assert back == [] and canvas == CANVAS

    def test_malformed_documents(self):
        with pytest.raises(ParseError):
            scene_from_json("not json")
        with pytest.raises(ParseError):
            scene_from_json('{"version":"9","canvas":{"w":800,"h":320},"lanes":[]}')
        with pytest.raises(ParseError):
            scene_from_json('{"version":"1","lanes":[]}')
        with pytest.raises(ParseError):
            scene_from_json('{"version":"1","canvas":{"w":800,"h":320},"lanes":[[[1,2]]]}')


class TestCulaneLines:
    def test_basic_parse(self):
        lanes = parse_culane_lines("1 2 3 4\n")
        assert len(lanes) == 1
        assert np.array_equal(lanes[0].points, [[3.0, 4.0], [1.0, 2.0]])

    def test_empty_text(self):
        assert parse_culane_lines("") == []

    def test_blank_lines_skipped(self):
        lanes = parse_culane_lines("1 2 3 4\n\n   \n5 6 7 8\n")
        assert len(lanes) == 2

    def test_trailing_space_tolerated(self):
        assert len(parse_culane_lines("1 2 3 4 \n")) == 1

    def test_odd_token_count(self):
        with pytest.raises(ParseError) as err:
            parse_culane_lines("1 2 3\n")
        assert err.value.line == 1
        assert "line 1" in str(err.value)

    def test_error_line_number_is_accurate(self):
        with pytest.raises(ParseError) as err:
            parse_culane_lines("1 2 3 4\n5 6 7 8\n1 2 x 4\n")
        assert err.value.line == 3

    def test_non_numeric_token(self):
        with pytest.raises(ParseError) as err:
            parse_culane_lines("1 2 abc 4\n")
        assert "abc" in str(err.value)

    def test_single_point_lane(self):
        with pytest.raises(ParseError) as err:
            parse_culane_lines("1 2\n")
        assert err.value.line == 1

    def test_non_finite_rejected(self):
        with pytest.raises(ParseError):
            parse_culane_lines("1 2 nan 4\n")
        with pytest.raises(ParseError):
            parse_culane_lines("1 2 inf 4\n")

    def test_duplicate_points_rejected_with_line(self):
        with pytest.raises(ParseError) as err:
            parse_culane_lines("1 2 3 4\n5 6 5 6\n")
        assert err.value.line == 2

    def test_write_format(self):
        text = write_culane_lines([Lane([(1.0, 2.0), (3.0, 4.0)])])
        assert text == "3.0000 4.0000 1.0000 2.0000\n"
        assert write_culane_lines([]) == ""

    def test_round_trip_tolerance(self):
        rng = np.random.default_rng(8)
        lanes = random_lanes(rng, 1000)
        back = parse_culane_lines(write_culane_lines(lanes))
        assert len(back) == len(lanes)
        for a, b in zip(lanes, back):
            assert np.max(np.abs(a.points - b.points)) <= 1e-4

    def test_double_serialization_stable(self):
        rng = np.random.default_rng(9)
        lanes = random_lanes(rng, 50)
        once = write_culane_lines(lanes)
        twice = write_culane_lines(parse_culane_lines(once))
        assert once == twice

    def test_file_round_trip(self, tmp_path):
        lanes = random_lanes(np.random.default_rng(10), 4)
        path = tmp_path / "preds.lines.txt"
        write_culane_file(path, lanes)
        back = read_culane_file(path)
        assert len(back) == 4


class TestPgm:
    def test_round_trip_quantization(self, tmp_path):
        rng = np.random.default_rng(12)
        values = rng.uniform(0.0, 0.73, size=(40, 100))
        path = tmp_path / "map.pgm"
        write_heatmap_pgm(path, values)
        back = read_heatmap_pgm(path)
        assert back.shape == values.shape
        step = values.max() / 65535.0
        assert np.max(np.abs(back - values)) <= step / 2.0 + 1e-12

    def test_zero_map(self, tmp_path):
        path = tmp_path / "zero.pgm"
        write_heatmap_pgm(path, np.zeros((4, 6)))
        back = read_heatmap_pgm(path)
        assert back.shape == (4, 6) and not np.any(back)

    def test_header_contents(self, tmp_path):
        path = tmp_path / "map.pgm"
        write_heatmap_pgm(path, np.full((2, 3), 0.5))
        head = path.read_bytes()[:64]
        assert head.startswith(b"P5\n# vmax=0.5\n3 2\n65535\n")

    def test_malformed_pgm(self, tmp_path):
        path = tmp_path / "bad.pgm"
        path.write_bytes(b"P2\n1 1\n255\n0")
        with pytest.raises(ParseError):
            read_heatmap_pgm(path)
        path.write_bytes(b"P5\n# vmax=1.0\n10 10\n65535\n\x00\x00")
        with pytest.raises(ParseError):
            read_heatmap_pgm(path)
        path.write_bytes(b"P5\n2 2\n65535\n" + b"\x00" * 8)  # no vmax
        with pytest.raises(ParseError):
            read_heatmap_pgm(path)
        path.write_bytes(b"P5\n# vmax=1.0\n2 2\n255\n" + b"\x00" * 4)
        with pytest.raises(ParseError):
            read_heatmap_pgm(path)

    def test_rejects_bad_arrays(self, tmp_path):
        with pytest.raises(DomainError):
            write_heatmap_pgm(tmp_path / "x.pgm", np.full((2, 2), -1.0))
        with pytest.raises(DomainError):
            write_heatmap_pgm(tmp_path / "x.pgm", np.full((2, 2), np.nan))


class TestTargetDir:
    def encode_corpus(self):
        g = make_guide_line(GuideKind.RECTANGLE, CANVAS)
        grid = GridSpec(CANVAS, 8)
        scenes = [
            [Lane([(150.4, 320.0), (160.0, 60.0)]), Lane([(520.3, 320.0), (500.0, 80.0)])],
            [Lane([(300.7, 320.0), (290.0, 60.0)])],
        ]
        return [encode_scene(lanes, g, grid, TargetConfig()) for lanes in scenes]

    def test_save_load_round_trip(self, tmp_path):
        targets = self.encode_corpus()
        save_targets(tmp_path / "t", targets, {"guide": "rect"})
        loaded, meta = load_targets(tmp_path / "t")
        assert meta == {"guide": "rect"}
        assert len(loaded) == 2
        for orig, back in zip(targets, loaded):
            assert back.cfg == orig.cfg
            assert np.array_equal(back.offsets.dx, orig.offsets.dx)
            assert np.array_equal(back.offsets.dy, orig.offsets.dy)
            assert np.array_equal(back.offsets.valid_mask, orig.offsets.valid_mask)
            assert len(back.instances) == len(orig.instances)
            kp_step = max(orig.keypoints.values.max(), 1e-300) / 65535.0
            assert np.max(np.abs(back.keypoints.values - orig.keypoints.values)) <= kp_step
            for (ra, ma), (rb, mb) in zip(orig.instances, back.instances):
                assert np.array_equal(ra.origin, rb.origin)
                assert ra.alpha == rb.alpha
                assert np.max(np.abs(ma.values - mb.values)) <= 1.0 / 65535.0

    def test_decode_matches_after_round_trip(self, tmp_path):
        targets = self.encode_corpus()
        save_targets(tmp_path / "t", targets, {})
        loaded, _ = load_targets(tmp_path / "t")
        cfg = DecoderConfig()
        for orig, back in zip(targets, loaded):
            da = decode_scene(orig, cfg)
            db = decode_scene(back, cfg)
            assert len(da) == len(db)
            for a, b in zip(da, db):
                assert a.points.shape == b.points.shape
                assert np.max(np.abs(a.points - b.points)) < 0.01

    def test_empty_corpus_rejected(self, tmp_path):
        with pytest.raises(DomainError):
            save_targets(tmp_path / "t", [], {})

    def test_missing_index(self, tmp_path):
        with pytest.raises(ParseError):
            load_targets(tmp_path)
