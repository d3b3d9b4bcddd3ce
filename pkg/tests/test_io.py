import json

import numpy as np
import pytest

from bevplan.errors import InputError
from bevplan.fmm import Trajectory
from bevplan.geometry import Correspondence
from bevplan.io import (RunConfig, atomic_write_text, bundle_from_spec,
                        load_scene, read_correspondences, read_depth_png,
                        read_labels, read_mask_png, read_trajectory_records,
                        write_correspondences, write_depth_png, write_labels,
                        write_mask_png, write_scene, write_trajectory)
from bevplan.supervision import PseudoLabel
from bevplan.synth import Box, make_scene


class TestRunConfig:
    def test_defaults_load(self):
        assert RunConfig.load() == RunConfig()

    def test_file_and_overrides(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"resolution": 0.01, "num_waypoints": 8}))
        cfg = RunConfig.load(str(p), {"num_waypoints": 12})
        assert cfg.resolution == 0.01
        assert cfg.num_waypoints == 12

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps({"resolutoin": 0.01}))
        with pytest.raises(InputError):
            RunConfig.load(str(p))

    def test_malformed_json(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text("{not json")
        with pytest.raises(InputError):
            RunConfig.load(str(p))

    def test_hash_stable_and_sensitive(self):
        assert RunConfig().hash() == RunConfig().hash()
        assert RunConfig().hash() != RunConfig(resolution=0.01).hash()


class TestImages:
    def test_depth_round_trip_millimeters(self, tmp_path):
        depth = np.array([[0.001, 1.5], [65.535, 2.0]])
        valid = np.array([[True, True], [True, False]])
        p = tmp_path / "d.png"
        write_depth_png(p, depth, valid)
        back = read_depth_png(p)
        assert np.array_equal(back.valid, valid)
        assert np.allclose(back.depth[valid], depth[valid])
        assert back.depth[1, 1] == 0.0

    def test_depth_quantized_to_millimeters(self, tmp_path):
        depth = np.array([[1.23456]])
        p = tmp_path / "d.png"
        write_depth_png(p, depth, np.array([[True]]))
        assert read_depth_png(p).depth[0, 0] == pytest.approx(1.235, abs=1e-9)

    def test_mask_round_trip(self, tmp_path):
        mask = np.array([[True, False], [False, True]])
        p = tmp_path / "m.png"
        write_mask_png(p, mask)
        assert np.array_equal(read_mask_png(p), mask)

    def test_missing_depth_file(self, tmp_path):
        with pytest.raises(InputError):
            read_depth_png(tmp_path / "absent.png")


def small_spec():
    return make_scene("roundtrip", 7, boxes=[Box((1.5, 1.8), (1.0, 0.5, 0.3))],
                      target_rect=(1.7, 3.0, 0.6, 0.4), start=(2.0, 0.5))


class TestSceneBundle:
    def test_write_load_round_trip(self, tmp_path):
        spec = small_spec()
        write_scene(spec, tmp_path / "scene")
        loaded = load_scene(tmp_path / "scene")
        mem = bundle_from_spec(spec)
        assert loaded.scene_id == "roundtrip"
        assert np.allclose(loaded.start, mem.start)
        assert len(loaded.frames) == len(mem.frames)
        f0, m0 = loaded.frames[0], mem.frames[0]
        assert np.allclose(f0.pose.rotation, m0.pose.rotation)
        assert np.allclose(f0.pose.translation, m0.pose.translation)
        assert np.array_equal(f0.depth.valid, m0.depth.valid)
        # depth quantized to millimeters on disk
        assert np.allclose(f0.depth.depth[f0.depth.valid],
                           m0.depth.depth[m0.depth.valid], atol=6e-4)
        assert [m.kind for m in f0.masks] == [m.kind for m in m0.masks]
        assert np.array_equal(f0.masks[0].mask, m0.masks[0].mask)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(InputError):
            load_scene(tmp_path)

    def test_malformed_manifest(self, tmp_path):
        (tmp_path / "manifest.json").write_text(json.dumps({"start": [0, 0], "frames": []}))
        with pytest.raises(InputError):
            load_scene(tmp_path)


class TestTrajectoryRecords:
    def test_round_trip(self, tmp_path):
        traj = Trajectory(np.array([[0.1, 0.2], [0.3, 0.4]]), "plane")
        p = tmp_path / "t.json"
        write_trajectory(p, traj, "s1", {"note": "x"})
        recs = read_trajectory_records(p)
        assert len(recs) == 1
        assert recs[0]["scene_id"] == "s1"
        assert recs[0]["frame"] == "plane"
        assert np.allclose(recs[0]["points"], traj.points)

    def test_multi_record_file(self, tmp_path):
        p = tmp_path / "t.jsonl"
        lines = [json.dumps({"scene_id": f"s{i}", "frame": "image",
                             "points": [[0, 0], [i + 1, 0]]}) for i in range(3)]
        p.write_text("\n".join(lines) + "\n")
        assert [r["scene_id"] for r in read_trajectory_records(p)] == ["s0", "s1", "s2"]

    def test_malformed_line_reports_number(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text(json.dumps({"scene_id": "a", "points": [[0, 0]]}) + "\nnot json\n")
        with pytest.raises(InputError, match=":2:"):
            read_trajectory_records(p)

    def test_empty_file_rejected(self, tmp_path):
        p = tmp_path / "t.jsonl"
        p.write_text("\n")
        with pytest.raises(InputError):
            read_trajectory_records(p)


class TestLabels:
    def test_round_trip(self, tmp_path):
        labels = [PseudoLabel("s1", np.array([[0.0, 0.0], [1.0, 2.0]]), "usable", "teacher"),
                  PseudoLabel("s2", np.array([[3.0, 4.0]]), "borderline", "ground_truth")]
        p = tmp_path / "labels.jsonl"
        write_labels(p, labels)
        back = read_labels(p)
        assert [(l.scene_id, l.tier, l.source) for l in back] == \
               [(l.scene_id, l.tier, l.source) for l in labels]
        assert np.allclose(back[0].points, labels[0].points)

    def test_missing_tier_field(self, tmp_path):
        p = tmp_path / "labels.jsonl"
        p.write_text(json.dumps({"scene_id": "s", "points": [[0, 0]], "source": "teacher"}) + "\n")
        with pytest.raises(InputError):
            read_labels(p)


class TestCorrespondences:
    def test_round_trip_with_comments(self, tmp_path):
        matches = [Correspondence((1.0, 2.0), (3.0, 4.0)),
                   Correspondence((5.5, 6.5), (7.5, 8.5))]
        p = tmp_path / "c.txt"
        write_correspondences(p, matches)
        text = "# header comment\n" + p.read_text()
        p.write_text(text)
        back = read_correspondences(p)
        assert [(m.src, m.dst) for m in back] == [(m.src, m.dst) for m in matches]

    def test_wrong_field_count(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("1 2 3\n")
        with pytest.raises(InputError):
            read_correspondences(p)

    def test_non_numeric(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("1 2 3 x\n")
        with pytest.raises(InputError):
            read_correspondences(p)


class TestAtomicWrite:
    def test_overwrites_and_leaves_no_tmp(self, tmp_path):
        p = tmp_path / "f.txt"
        atomic_write_text(p, "one")
        atomic_write_text(p, "two")
        assert p.read_text() == "two"
        assert [q.name for q in tmp_path.iterdir()] == ["f.txt"]
