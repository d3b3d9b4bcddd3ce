"""File formats: scene bundles, depth/mask images, trajectory records,
pseudo-label files, correspondence lists, and the run configuration."""

import dataclasses
import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .errors import InputError
from .fmm import Trajectory
from .geometry import (CameraFrame, CameraIntrinsics, Correspondence,
                       DepthFrame, LabeledMask, Pose)
from .supervision import PseudoLabel
from .synth import SceneSpec, render

DEPTH_SCALE = 1000.0  # stored as 16-bit millimeters, 0 = invalid


@dataclass
class RunConfig:
    """Every pipeline tunable with its documented default."""

    resolution: float = 0.005
    grid_padding: float = 0.5
    band_low: float = -0.5
    band_high: float = 1.5
    min_support: int = 3
    obstacle_threshold: int = 3
    safety_margin: float = 0.20
    penalty_radius: float = 0.50
    penalty_gain: float = 4.0
    plane_iterations: int = 512
    plane_inlier_threshold: float = 0.02
    plane_seed: int = 0
    plane_fit_max_points: int = 50000
    homography_iterations: int = 2000
    homography_inlier_threshold: float = 3.0
    max_features: int = 400
    min_inliers: int = 20
    center_shift_limit: float = 0.35
    homography_seed: int = 0
    smoothing_window: int = 5
    num_waypoints: int = 16
    direction_weight: float = 0.5
    loss_epsilon: float = 1e-8
    eval_resample: int = 16

    @classmethod
    def load(cls, path: Optional[str] = None, overrides: Optional[dict] = None) -> "RunConfig":
        values = {}
        if path is not None:
            try:
                with open(path) as f:
                    values.update(json.load(f))
            except (OSError, json.JSONDecodeError) as e:
                raise InputError(f"cannot read config {path}: {e}") from e
        if overrides:
            values.update(overrides)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(values) - known
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**values)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def atomic_write_text(path: str, text: str):
    """Write-then-rename so partial failures never leave partial files."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# Images


def write_depth_png(path, depth: np.ndarray, valid: np.ndarray):
    mm = np.where(valid, np.round(depth * DEPTH_SCALE), 0.0)
    mm = np.clip(mm, 0, 65535).astype(np.uint16)
    Image.fromarray(mm).save(path)


def read_depth_png(path) -> DepthFrame:
    try:
        arr = np.asarray(Image.open(path), dtype=np.float64)
    except OSError as e:
        raise InputError(f"cannot read depth image {path}: {e}") from e
    valid = arr > 0
    return DepthFrame(depth=np.where(valid, arr / DEPTH_SCALE, 0.0), valid=valid)


def write_color_png(path, color: np.ndarray):
    Image.fromarray(np.clip(color, 0, 255).astype(np.uint8), mode="RGB").save(path)


def read_color_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)


def write_mask_png(path, mask: np.ndarray):
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


def read_mask_png(path) -> np.ndarray:
    return np.asarray(Image.open(path).convert("L")) > 0


# --------------------------------------------------------------------------
# Scene bundles


@dataclass
class SceneBundle:
    scene_id: str
    start: np.ndarray  # planar meters
    frames: list[CameraFrame]
    instruction: Optional[str] = None
    spec: Optional[SceneSpec] = None  # present for in-memory synthetic scenes


def load_scene(directory) -> SceneBundle:
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    try:
        with open(manifest_path) as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read manifest {manifest_path}: {e}") from e

    try:
        k = CameraIntrinsics(**manifest["intrinsics"])
        start = np.asarray(manifest["start"], dtype=float).reshape(2)
        frames = []
        for fr in manifest["frames"]:
            pose = Pose(np.asarray(fr["rotation"], dtype=float),
                        np.asarray(fr["translation"], dtype=float))
            depth = read_depth_png(directory / fr["depth"])
            color = read_color_png(directory / fr["color"]) if fr.get("color") else None
            masks = [LabeledMask(frame_id=fr["id"], kind=m["kind"],
                                 mask=read_mask_png(directory / m["path"]),
                                 class_name=m.get("class_name"))
                     for m in fr.get("masks", [])]
            frames.append(CameraFrame(frame_id=fr["id"], intrinsics=k, pose=pose,
                                      depth=depth, color=color, masks=masks))
    except (KeyError, TypeError, ValueError) as e:
        raise InputError(f"malformed manifest {manifest_path}: {e}") from e
    if not frames:
        raise InputError("scene has no frames")
    return SceneBundle(scene_id=manifest.get("scene_id", directory.name),
                       start=start, frames=frames,
                       instruction=manifest.get("instruction"))


def write_scene(spec: SceneSpec, directory):
    """Materialize a synthetic scene as an on-disk bundle."""
    directory = Path(directory)
    for sub in ("depth", "color", "masks"):
        (directory / sub).mkdir(parents=True, exist_ok=True)
    frames_meta = []
    for i, pose in enumerate(spec.cameras):
        frame = render(spec, i)
        fid = f"f{i:03d}"
        write_depth_png(directory / "depth" / f"{fid}.png",
                        frame.depth.depth, frame.depth.valid)
        write_color_png(directory / "color" / f"{fid}.png", frame.color)
        masks_meta = []
        for m in frame.masks:
            mpath = f"masks/{fid}_{m.kind}.png"
            write_mask_png(directory / mpath, m.mask)
            masks_meta.append({"kind": m.kind, "path": mpath, "class_name": m.class_name})
        frames_meta.append({
            "id": fid,
            "rotation": pose.rotation.tolist(),
            "translation": pose.translation.tolist(),
            "depth": f"depth/{fid}.png",
            "color": f"color/{fid}.png",
            "masks": masks_meta,
        })
    manifest = {
        "scene_id": spec.name,
        "intrinsics": dataclasses.asdict(spec.intrinsics),
        "start": list(spec.start),
        "frames": frames_meta,
    }
    atomic_write_text(directory / "manifest.json", json.dumps(manifest, indent=2))


def bundle_from_spec(spec: SceneSpec) -> SceneBundle:
    """In-memory bundle, bypassing disk I/O (tests, quick runs)."""
    frames = [render(spec, i) for i in range(len(spec.cameras))]
    return SceneBundle(scene_id=spec.name, start=np.asarray(spec.start, dtype=float),
                       frames=frames, spec=spec)


# --------------------------------------------------------------------------
# Trajectory and label records


def trajectory_record(traj: Trajectory, scene_id: str, provenance: Optional[dict] = None) -> str:
    rec = {"scene_id": scene_id, "frame": traj.frame,
           "points": [[float(x), float(y)] for x, y in traj.points]}
    if provenance:
        rec["provenance"] = provenance
    return json.dumps(rec, sort_keys=True)


def write_trajectory(path, traj: Trajectory, scene_id: str, provenance: Optional[dict] = None):
    atomic_write_text(path, trajectory_record(traj, scene_id, provenance) + "\n")


def read_trajectory_records(path) -> list[dict]:
    """One JSON record per line; a plan-emitted trajectory file is one record."""
    records = []
    try:
        with open(path) as f:
            for ln, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    rec["points"] = np.asarray(rec["points"], dtype=float).reshape(-1, 2)
                except (json.JSONDecodeError, KeyError, ValueError) as e:
                    raise InputError(f"{path}:{ln}: malformed trajectory record: {e}") from e
                records.append(rec)
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    if not records:
        raise InputError(f"{path}: no trajectory records")
    return records


def read_labels(path) -> list[PseudoLabel]:
    labels = []
    for rec in read_trajectory_records(path):
        try:
            labels.append(PseudoLabel(scene_id=rec["scene_id"], points=rec["points"],
                                      tier=rec["tier"], source=rec["source"],
                                      frame=rec.get("frame", "image")))
        except KeyError as e:
            raise InputError(f"{path}: label record missing field {e}") from e
    return labels


def write_labels(path, labels: list[PseudoLabel]):
    lines = []
    for l in labels:
        lines.append(json.dumps({
            "scene_id": l.scene_id, "tier": l.tier, "source": l.source,
            "frame": l.frame,
            "points": [[float(x), float(y)] for x, y in l.points],
        }, sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + ("\n" if lines else ""))


def read_correspondences(path) -> list[Correspondence]:
    """Plain text, one 'sx sy dx dy' quadruple per line."""
    matches = []
    try:
        with open(path) as f:
            for ln, line in enumerate(f, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) != 4:
                    raise InputError(f"{path}:{ln}: expected 4 values, got {len(parts)}")
                try:
                    sx, sy, dx, dy = map(float, parts)
                except ValueError as e:
                    raise InputError(f"{path}:{ln}: non-numeric value") from e
                matches.append(Correspondence((sx, sy), (dx, dy)))
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    return matches


def write_correspondences(path, matches: list[Correspondence]):
    lines = [f"{m.src[0]} {m.src[1]} {m.dst[0]} {m.dst[1]}" for m in matches]
    atomic_write_text(path, "\n".join(lines) + "\n")
