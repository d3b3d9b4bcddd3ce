"""End-to-end teacher planning: backprojection, plane fit, BEV fusion,
cost map, FMM, and waypoint post-processing, with file exports."""

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import io as bio
from .bev import (BevGrid, HeightBand, accumulate_frame,
                  consolidate_target, fused_color_image, rasterize_mask)
from .costmap import CostMap, CostParams, build_costmap
from .errors import BevPlanError, PlanningError
from .fmm import (ArrivalField, Trajectory, extract_path, select_goal,
                  smooth_and_resample, solve_eikonal, trajectory_to_image)
from .geometry import (NavigationPlane, PointCloud, backproject,
                       fit_plane_ransac, plane_coordinates, signed_height)


@dataclass
class PlanResult:
    plane: NavigationPlane
    grid: BevGrid
    costmap: CostMap
    field: ArrivalField
    goal: tuple[int, int]
    path: list[tuple[int, int]]
    trajectory_plane: Trajectory
    trajectory_image: Trajectory
    log: dict


def _staged(stage: str):
    def deco(fn):
        def wrapper(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except BevPlanError as e:
                if e.stage is None:
                    e.stage = stage
                raise
        return wrapper
    return deco


def _subsample(points: np.ndarray, limit: int) -> np.ndarray:
    if len(points) <= limit:
        return points
    stride = int(np.ceil(len(points) / limit))
    return points[::stride]


def run_plan(bundle: "bio.SceneBundle", config: Optional[bio.RunConfig] = None) -> PlanResult:
    """Run the full teacher pipeline on a scene bundle."""
    config = config or bio.RunConfig()
    log = {"scene_id": bundle.scene_id, "config_hash": config.hash(),
           "config": config.to_dict(), "timings": {}, "warnings": []}
    t0 = time.perf_counter()

    def mark(stage):
        nonlocal t0
        now = time.perf_counter()
        log["timings"][stage] = round(now - t0, 4)
        t0 = now

    clouds = [_staged("backproject")(backproject)(f) for f in bundle.frames]
    mark("backproject")

    all_pts = np.vstack([c.points for c in clouds])
    fit_pts = _subsample(all_pts, config.plane_fit_max_points)
    origins = np.array([f.pose.translation for f in bundle.frames])
    plane = _staged("plane_fit")(fit_plane_ransac)(
        PointCloud(fit_pts, np.zeros((len(fit_pts), 3)), np.ones(len(fit_pts))),
        iterations=config.plane_iterations,
        inlier_threshold=config.plane_inlier_threshold,
        seed=config.plane_seed, camera_origins=origins)
    mark("plane_fit")

    band = HeightBand(config.band_low, config.band_high)
    first_h = signed_height(clouds[0].points, plane)
    seed_pts = plane_coordinates(
        clouds[0].points[(first_h >= band.low) & (first_h <= band.high)], plane)
    if len(seed_pts) == 0:
        raise PlanningError("first frame has no in-band points", stage="bev")
    start = np.asarray(bundle.start, dtype=float)
    grid = BevGrid.from_footprint(seed_pts, start, config.resolution,
                                  padding=config.grid_padding)
    for frame, cloud in zip(bundle.frames, clouds):
        accumulate_frame(grid, cloud, plane, band)
        for mask in frame.masks:
            _staged("rasterize")(rasterize_mask)(grid, mask, frame, plane, band)
    mark("bev")

    region = consolidate_target(grid, min_support=config.min_support)
    if region.is_empty:
        raise PlanningError("no consolidated target region", stage="target")
    params = CostParams(safety_margin=config.safety_margin,
                        penalty_radius=config.penalty_radius,
                        penalty_gain=config.penalty_gain)
    cm = _staged("costmap")(build_costmap)(grid, params,
                                           obstacle_threshold=config.obstacle_threshold)
    mark("costmap")

    start_cell = cm.cell_of(start)
    if not (0 <= start_cell[0] < cm.rows and 0 <= start_cell[1] < cm.cols):
        raise PlanningError("start position outside the grid", stage="plan")
    if cm.blocked[start_cell]:
        raise PlanningError("start cell is blocked", stage="plan")
    field = _staged("fmm")(solve_eikonal)(cm, start_cell)
    mark("fmm")

    goal = _staged("goal")(select_goal)(region, cm, field)
    goal_center = cm.cell_center(np.array([goal], dtype=float))[0]
    region_centers = cm.cell_center(np.asarray(region.cells, dtype=float))
    goal_gap = float(np.min(np.linalg.norm(region_centers - goal_center, axis=1)))
    # the fallback goal can sit across a wall; past the inflated margin it
    # means the target itself is sealed off
    if goal_gap > config.safety_margin + 3 * config.resolution:
        raise PlanningError(
            f"goal unreachable: nearest reachable cell is {goal_gap:.3f} m "
            "from the target region", stage="goal")
    path = _staged("extract")(extract_path)(field, goal)
    traj_plane = _staged("smooth")(smooth_and_resample)(
        path, cm, window=config.smoothing_window, num_waypoints=config.num_waypoints)
    traj_image, dropped = _staged("project")(trajectory_to_image)(
        traj_plane, bundle.frames[0], plane)
    if dropped:
        log["warnings"].append(f"{dropped} waypoints behind the first camera")
    mark("plan")

    log.update({
        "plane_normal": plane.normal.tolist(),
        "plane_offset": plane.offset,
        "grid_shape": [grid.rows, grid.cols],
        "discarded_out_of_band": grid.discarded_out_of_band,
        "discarded_out_of_grid": grid.discarded_out_of_grid,
        "target_cells": int(len(region.cells)),
        "goal_cell": [int(goal[0]), int(goal[1])],
        "path_cells": len(path),
        "dropped_behind_camera": dropped,
    })
    return PlanResult(plane=plane, grid=grid, costmap=cm, field=field, goal=goal,
                      path=path, trajectory_plane=traj_plane,
                      trajectory_image=traj_image, log=log)


def export_plan(result: PlanResult, out_dir, scene_id: str, config: bio.RunConfig):
    """Write trajectories, intermediate grids, and the run log."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prov = {"scene_id": scene_id, "config_hash": config.hash(),
            "dropped_behind_camera": result.log["dropped_behind_camera"]}
    bio.write_trajectory(out / "trajectory_plane.json", result.trajectory_plane,
                         scene_id, prov)
    bio.write_trajectory(out / "trajectory_image.json", result.trajectory_image,
                         scene_id, prov)

    grid = result.grid
    bio.write_color_png(out / "bev_color.png", fused_color_image(grid))
    bio.write_mask_png(out / "target_support.png", grid.target_support >= config.min_support)
    bio.write_mask_png(out / "obstacle_support.png",
                       grid.obstacle_support >= config.obstacle_threshold)
    bio.atomic_write_text(out / "bev_meta.txt",
                          f"origin {grid.origin[0]} {grid.origin[1]}\n"
                          f"resolution {grid.resolution}\n"
                          f"rows {grid.rows}\ncols {grid.cols}\n")

    np.savez(out / "costmap.npz", cost=result.costmap.cost,
             blocked=result.costmap.blocked, origin=result.costmap.origin,
             resolution=result.costmap.resolution)
    np.savez(out / "arrival.npz", times=result.field.times,
             start=np.array(result.field.start))
    bio.atomic_write_text(out / "run_log.json", json.dumps(result.log, indent=2, sort_keys=True))
