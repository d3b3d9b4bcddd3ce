"""Deterministic synthetic scenes: planar floor, axis-aligned box obstacles,
a target patch, and ray-cast depth/RGB/mask rendering from scripted poses.

The floor is z = 0 in the scene frame; cameras follow the CV convention
(x right, y down, z forward).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .geometry import CameraFrame, CameraIntrinsics, DepthFrame, LabeledMask, Pose

FLOOR_COLOR = np.array([120.0, 120.0, 120.0])
TARGET_COLOR = np.array([40.0, 200.0, 60.0])


@dataclass(frozen=True)
class Box:
    """Axis-aligned box resting on the floor."""

    min_corner: tuple[float, float]  # (x, y) of the footprint corner
    size: tuple[float, float, float]  # (sx, sy, sz)
    color: tuple[float, float, float] = (200.0, 60.0, 40.0)

    def __post_init__(self):
        if min(self.size) <= 0:
            raise InputError("box sizes must be positive")

    def footprint(self) -> tuple[float, float, float, float]:
        return (self.min_corner[0], self.min_corner[1], self.size[0], self.size[1])


@dataclass(frozen=True)
class TargetPatch:
    """Rectangle on the floor marking the semantic target."""

    rect: tuple[float, float, float, float]  # (x, y, w, h)
    class_name: str = "target"


@dataclass
class SceneSpec:
    seed: int
    bounds: tuple[float, float, float, float]  # (xmin, xmax, ymin, ymax)
    boxes: list[Box]
    target: TargetPatch
    cameras: list[Pose]
    intrinsics: CameraIntrinsics
    start: tuple[float, float]  # planar (= floor x, y) start position
    depth_noise_sigma: float = 0.0
    name: str = "scene"


def look_at(position, at, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera pose at `position` with the optical axis through `at`."""
    position = np.asarray(position, dtype=float)
    forward = np.asarray(at, dtype=float) - position
    forward = forward / np.linalg.norm(forward)
    up = np.asarray(up, dtype=float)
    right = np.cross(forward, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.array([1.0, 0.0, 0.0])
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    return Pose(np.stack([right, down, forward], axis=1), position)


def render(spec: SceneSpec, pose_index: int) -> CameraFrame:
    """Ray-cast one scripted pose into depth, RGB, and exact label masks."""
    if not 0 <= pose_index < len(spec.cameras):
        raise InputError("pose index out of range")
    pose = spec.cameras[pose_index]
    k = spec.intrinsics
    us, vs = np.meshgrid(np.arange(k.width), np.arange(k.height))
    dir_cam = np.stack([(us - k.cx) / k.fx, (vs - k.cy) / k.fy, np.ones_like(us, dtype=float)],
                       axis=-1)
    # camera z-depth equals the ray parameter because dir_cam has unit z
    d = dir_cam @ pose.rotation.T
    o = pose.translation

    hit_s = np.full(us.shape, np.inf)
    hit_id = np.full(us.shape, -1, dtype=int)  # 0 = floor, i + 1 = box i

    dz = d[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        s_floor = -o[2] / dz
        px = o[0] + s_floor * d[..., 0]
        py = o[1] + s_floor * d[..., 1]
    xmin, xmax, ymin, ymax = spec.bounds
    ok = (s_floor > 1e-6) & (px >= xmin) & (px <= xmax) & (py >= ymin) & (py <= ymax)
    hit_s = np.where(ok, s_floor, hit_s)
    hit_id = np.where(ok, 0, hit_id)

    for i, box in enumerate(spec.boxes):
        lo = np.array([box.min_corner[0], box.min_corner[1], 0.0])
        hi = lo + np.asarray(box.size)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (lo - o) / d
            t2 = (hi - o) / d
        tmin = np.minimum(t1, t2).max(axis=-1)
        tmax = np.maximum(t1, t2).min(axis=-1)
        ok = (tmax >= tmin) & (tmin > 1e-6) & (tmin < hit_s)
        hit_s = np.where(ok, tmin, hit_s)
        hit_id = np.where(ok, i + 1, hit_id)

    valid = np.isfinite(hit_s)
    depth = np.where(valid, hit_s, 0.0)

    if spec.depth_noise_sigma > 0:
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, pose_index]))
        noise = rng.normal(0.0, spec.depth_noise_sigma, size=depth.shape)
        depth = np.where(valid, np.maximum(depth + noise, 1e-3), 0.0)

    with np.errstate(invalid="ignore"):
        hx = o[0] + hit_s * d[..., 0]
        hy = o[1] + hit_s * d[..., 1]
    tx, ty, tw, th = spec.target.rect
    on_target = valid & (hit_id == 0) & (hx >= tx) & (hx <= tx + tw) & (hy >= ty) & (hy <= ty + th)

    color = np.zeros(us.shape + (3,))
    color[valid & (hit_id == 0)] = FLOOR_COLOR
    color[on_target] = TARGET_COLOR
    for i, box in enumerate(spec.boxes):
        color[valid & (hit_id == i + 1)] = np.asarray(box.color)

    masks = [
        LabeledMask(frame_id=f"{spec.name}_{pose_index}", kind="target",
                    mask=on_target, class_name=spec.target.class_name),
        LabeledMask(frame_id=f"{spec.name}_{pose_index}", kind="obstacle",
                    mask=valid & (hit_id > 0)),
    ]
    return CameraFrame(frame_id=f"{spec.name}_{pose_index}",
                       intrinsics=k, pose=pose,
                       depth=DepthFrame(depth=depth, valid=valid),
                       color=color, masks=masks)


def analytic_footprints(spec: SceneSpec):
    """Exact blocked and target rectangles in floor coordinates."""
    return [b.footprint() for b in spec.boxes], spec.target.rect


# --------------------------------------------------------------------------
# Scripted scene suite


def _coverage_cameras(bounds, height=2.0, fx=230.0):
    """Nadir camera sweep that densely observes the floor inside the bounds."""
    xmin, xmax, ymin, ymax = bounds
    half_u = 160.0 / fx * height * 0.9
    half_v = 120.0 / fx * height * 0.9
    xs = np.arange(xmin + half_u, xmax + half_u, 2 * half_u * 0.85)
    ys = np.arange(ymin + half_v, ymax + half_v, 2 * half_v * 0.85)
    poses = []
    for y in ys:
        for x in xs:
            poses.append(look_at((x, y, height), (x, y + 1e-6, 0.0)))
    return poses


def default_intrinsics() -> CameraIntrinsics:
    return CameraIntrinsics(fx=230.0, fy=230.0, cx=160.0, cy=120.0, width=320, height=240)


def make_scene(name: str, seed: int, boxes: list[Box], target_rect, start,
               bounds=(0.0, 4.0, 0.0, 4.0), look_target=None,
               depth_noise_sigma: float = 0.0) -> SceneSpec:
    """Assemble a scene with a forward-looking first frame at the start plus a
    nadir coverage sweep."""
    target = TargetPatch(rect=tuple(target_rect))
    if look_target is None:
        look_target = (target_rect[0] + target_rect[2] / 2,
                       target_rect[1] + target_rect[3] / 2, 0.0)
    first = look_at((start[0], start[1], 1.0), look_target)
    cameras = [first] + _coverage_cameras(bounds)
    return SceneSpec(seed=seed, bounds=bounds, boxes=boxes, target=target,
                     cameras=cameras, intrinsics=default_intrinsics(),
                     start=tuple(start), depth_noise_sigma=depth_noise_sigma,
                     name=name)


def builtin_scenes() -> dict[str, SceneSpec]:
    """Scripted planning scenarios exercising every planner branch."""
    h = 0.3  # low boxes keep nadir occlusion shadows short
    scenes = {}

    # straight corridor between two walls
    scenes["corridor"] = make_scene(
        "corridor", 11,
        boxes=[Box((0.8, 0.0), (0.4, 3.0, h)), Box((2.8, 0.0), (0.4, 3.0, h))],
        target_rect=(1.7, 3.3, 0.6, 0.4), start=(2.0, 0.5))

    # wall across the scene with a single gap
    scenes["gap_in_wall"] = make_scene(
        "gap_in_wall", 12,
        boxes=[Box((0.0, 1.8), (1.5, 0.4, h)), Box((2.5, 1.8), (1.5, 0.4, h))],
        target_rect=(1.7, 3.2, 0.6, 0.5), start=(2.0, 0.5))

    # dead-end pocket forcing a detour
    scenes["dead_end_detour"] = make_scene(
        "dead_end_detour", 13,
        boxes=[Box((1.0, 1.4), (0.35, 1.8, h)), Box((1.0, 3.0), (1.8, 0.35, h)),
               Box((2.6, 1.4), (0.35, 1.95, h))],
        target_rect=(1.6, 2.0, 0.5, 0.5), start=(2.0, 0.5),
        look_target=(2.0, 3.0, 0.0))

    # goal tucked behind a single obstacle
    scenes["goal_behind_obstacle"] = make_scene(
        "goal_behind_obstacle", 14,
        boxes=[Box((1.5, 1.8), (1.0, 0.5, h))],
        target_rect=(1.7, 2.9, 0.6, 0.5), start=(2.0, 0.5))

    # open floor, no obstacles at all
    scenes["open_floor"] = make_scene(
        "open_floor", 15, boxes=[],
        target_rect=(2.8, 3.0, 0.6, 0.5), start=(1.0, 0.8))

    # slalom between staggered blocks
    scenes["slalom"] = make_scene(
        "slalom", 16,
        boxes=[Box((0.0, 1.2), (2.2, 0.35, h)), Box((1.8, 2.4), (2.2, 0.35, h))],
        target_rect=(1.0, 3.3, 0.6, 0.4), start=(3.0, 0.5),
        look_target=(2.0, 2.5, 0.0))

    # diagonal shortcut across an open corner
    scenes["diagonal"] = make_scene(
        "diagonal", 17,
        boxes=[Box((1.6, 1.6), (0.8, 0.8, h))],
        target_rect=(3.1, 3.1, 0.5, 0.5), start=(0.7, 0.7),
        look_target=(2.0, 2.0, 0.0))

    # narrow doorway close to the target
    scenes["doorway_near_goal"] = make_scene(
        "doorway_near_goal", 18,
        boxes=[Box((0.0, 2.4), (1.6, 0.4, h)), Box((2.5, 2.4), (1.5, 0.4, h))],
        target_rect=(1.8, 3.3, 0.5, 0.4), start=(1.0, 0.6),
        look_target=(2.0, 2.6, 0.0))

    # two gaps, the near one leading to a longer route
    scenes["double_gap"] = make_scene(
        "double_gap", 19,
        boxes=[Box((0.0, 1.5), (0.9, 0.35, h)), Box((1.8, 1.5), (2.2, 0.35, h)),
               Box((0.0, 2.7), (2.4, 0.35, h))],
        target_rect=(3.0, 3.2, 0.6, 0.5), start=(2.0, 0.5),
        look_target=(2.5, 2.0, 0.0))

    # L-shaped wall hugging the target region
    scenes["l_wall"] = make_scene(
        "l_wall", 20,
        boxes=[Box((1.2, 1.2), (1.9, 0.35, h)), Box((2.75, 1.2), (0.35, 1.6, h))],
        target_rect=(1.9, 2.2, 0.5, 0.5), start=(0.6, 0.6),
        look_target=(2.0, 2.0, 0.0))

    return scenes
