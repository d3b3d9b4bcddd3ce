import numpy as np
import pytest

from bevplan.errors import PlanningError
from bevplan.io import RunConfig, bundle_from_spec
from bevplan.pipeline import export_plan, run_plan
from bevplan.synth import Box, builtin_scenes, make_scene

# coarse grid keeps the end-to-end tests quick; the spec resolution is the
# config default and is exercised by unit tests
FAST = RunConfig(resolution=0.02)


@pytest.fixture(scope="module")
def open_floor_result():
    bundle = bundle_from_spec(builtin_scenes()["open_floor"])
    return bundle, run_plan(bundle, FAST)


class TestRunPlan:
    def test_path_cells_free_and_connected(self, open_floor_result):
        _, result = open_floor_result
        for r, c in result.path:
            assert not result.costmap.blocked[r, c]
        for (r0, c0), (r1, c1) in zip(result.path, result.path[1:]):
            assert max(abs(r1 - r0), abs(c1 - c0)) == 1

    def test_trajectory_starts_at_start_cell(self, open_floor_result):
        bundle, result = open_floor_result
        start_center = result.costmap.cell_center(
            np.array([result.costmap.cell_of(bundle.start)], dtype=float))[0]
        assert np.allclose(result.trajectory_plane.points[0], start_center, atol=1e-9)

    def test_final_waypoint_near_goal(self, open_floor_result):
        _, result = open_floor_result
        goal_center = result.costmap.cell_center(np.array([result.goal], dtype=float))[0]
        assert np.linalg.norm(result.trajectory_plane.points[-1] - goal_center) < 0.10

    def test_goal_borders_target_evidence(self, open_floor_result):
        _, result = open_floor_result
        gr, gc = result.goal
        support = result.grid.target_support >= FAST.min_support
        assert not support[gr, gc]
        window = support[max(0, gr - 2):gr + 3, max(0, gc - 2):gc + 3]
        assert window.any()

    def test_image_trajectory_frame(self, open_floor_result):
        _, result = open_floor_result
        assert result.trajectory_image.frame == "image"
        assert len(result.trajectory_image) >= 2

    def test_log_contents(self, open_floor_result):
        _, result = open_floor_result
        log = result.log
        assert log["scene_id"] == "open_floor"
        assert log["config_hash"] == FAST.hash()
        for stage in ("backproject", "plane_fit", "bev", "costmap", "fmm", "plan"):
            assert stage in log["timings"]
        assert log["target_cells"] > 0
        assert log["path_cells"] == len(result.path)

    def test_plane_close_to_floor(self, open_floor_result):
        _, result = open_floor_result
        assert abs(result.plane.normal[2]) > 0.9999
        assert abs(result.plane.offset) < 0.01


def walled_spec():
    # target fully enclosed by low walls; inflation seals the corners
    return make_scene(
        "walled", 99,
        boxes=[Box((1.2, 2.5), (1.7, 0.3, 0.3)), Box((1.2, 3.6), (1.7, 0.3, 0.3)),
               Box((1.2, 2.5), (0.3, 1.4, 0.3)), Box((2.6, 2.5), (0.3, 1.4, 0.3))],
        target_rect=(1.7, 3.0, 0.6, 0.4), start=(2.0, 0.5))


class TestFailureModes:
    def test_walled_off_target_unreachable(self):
        bundle = bundle_from_spec(walled_spec())
        with pytest.raises(PlanningError) as err:
            run_plan(bundle, FAST)
        assert "reach" in str(err.value)

    def test_no_target_evidence(self):
        bundle = bundle_from_spec(builtin_scenes()["open_floor"])
        for frame in bundle.frames:
            frame.masks = [m for m in frame.masks if m.kind != "target"]
        with pytest.raises(PlanningError, match="target"):
            run_plan(bundle, FAST)

    def test_blocked_start(self):
        spec = make_scene("blocked_start", 98,
                          boxes=[Box((1.6, 0.2), (0.8, 0.8, 0.3))],
                          target_rect=(1.7, 3.0, 0.6, 0.4), start=(2.0, 0.5))
        bundle = bundle_from_spec(spec)
        with pytest.raises(PlanningError, match="start"):
            run_plan(bundle, FAST)

    def test_stage_attached_to_errors(self):
        bundle = bundle_from_spec(walled_spec())
        with pytest.raises(PlanningError) as err:
            run_plan(bundle, FAST)
        assert err.value.stage is not None


class TestExport:
    EXPECTED = ["arrival.npz", "bev_color.png", "bev_meta.txt", "costmap.npz",
                "obstacle_support.png", "run_log.json", "target_support.png",
                "trajectory_image.json", "trajectory_plane.json"]

    def test_all_files_written(self, open_floor_result, tmp_path):
        bundle, result = open_floor_result
        export_plan(result, tmp_path, bundle.scene_id, FAST)
        assert sorted(p.name for p in tmp_path.iterdir()) == self.EXPECTED

    def test_rerun_byte_identical(self, tmp_path):
        bundle = bundle_from_spec(builtin_scenes()["open_floor"])
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        export_plan(run_plan(bundle, FAST), out_a, bundle.scene_id, FAST)
        export_plan(run_plan(bundle, FAST), out_b, bundle.scene_id, FAST)
        for name in ("trajectory_plane.json", "trajectory_image.json", "run_log.json"):
            if name == "run_log.json":
                continue  # timings differ between runs by design
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()
