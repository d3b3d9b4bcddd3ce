"""Camera geometry: backprojection, plane fitting, image projection, homography.

Conventions:
  - depth is range along the optical axis (z-depth), not ray length
  - poses map camera coordinates to world coordinates
  - the navigation plane satisfies normal . x + offset = 0 with unit normal
"""

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from .errors import GateRejection, InputError, PlanningError


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InputError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InputError("principal point must lie inside the image")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Pose:
    """Rigid camera-to-world transform."""

    rotation: np.ndarray   # 3x3, camera -> world
    translation: np.ndarray  # camera origin in world coordinates

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float).reshape(3)
        if r.shape != (3, 3):
            raise InputError("rotation must be 3x3")
        if not np.allclose(r.T @ r, np.eye(3), atol=1e-6):
            raise InputError("rotation is not orthonormal")
        if not np.isclose(np.linalg.det(r), 1.0, atol=1e-6):
            raise InputError("rotation determinant must be +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))


@dataclass(frozen=True)
class DepthFrame:
    """Per-pixel z-depth in meters; invalid pixels flagged False."""

    depth: np.ndarray  # (H, W) float
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=float)
        v = np.asarray(self.valid, dtype=bool)
        if d.shape != v.shape or d.ndim != 2:
            raise InputError("depth and validity shapes must match")
        if np.any(v & ~(np.isfinite(d) & (d > 0))):
            raise InputError("valid depths must be finite and positive")
        object.__setattr__(self, "depth", d)
        object.__setattr__(self, "valid", v)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]


@dataclass
class LabeledMask:
    """Binary pixel mask tagged as target or obstacle evidence."""

    frame_id: str
    kind: str  # "target" | "obstacle"
    mask: np.ndarray  # (H, W) bool
    class_name: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("target", "obstacle"):
            raise InputError(f"unknown mask kind {self.kind!r}")
        self.mask = np.asarray(self.mask, dtype=bool)


@dataclass
class CameraFrame:
    """One frame of scene evidence: intrinsics, pose, depth, color, masks."""

    frame_id: str
    intrinsics: CameraIntrinsics
    pose: Pose
    depth: DepthFrame
    color: Optional[np.ndarray] = None  # (H, W, 3) float in [0, 255]
    masks: list[LabeledMask] = field(default_factory=list)

    def __post_init__(self):
        if (self.depth.height, self.depth.width) != (self.intrinsics.height, self.intrinsics.width):
            raise InputError("depth dimensions do not match intrinsics")
        if self.color is not None:
            self.color = np.asarray(self.color, dtype=float)
            if self.color.shape != (self.intrinsics.height, self.intrinsics.width, 3):
                raise InputError("color dimensions do not match intrinsics")
        for m in self.masks:
            if m.mask.shape != (self.intrinsics.height, self.intrinsics.width):
                raise InputError("mask dimensions do not match frame")


@dataclass
class PointCloud:
    points: np.ndarray   # (N, 3) world meters
    colors: np.ndarray   # (N, 3)
    weights: np.ndarray  # (N,) positive confidences
    source: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=float).reshape(-1, 3)
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        n = len(self.points)
        if len(self.colors) != n or len(self.weights) != n:
            raise InputError("point cloud arrays must have equal length")
        if np.any(self.weights <= 0):
            raise InputError("point weights must be positive")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class NavigationPlane:
    """Scene ground plane, normal . x + offset = 0, unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float).reshape(3)
        norm = np.linalg.norm(n)
        if abs(norm - 1.0) > 1e-9:
            n = n / norm
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Deterministic in-plane frame: (origin point, first axis, second axis).

        First axis is the normalized projection of world x onto the plane,
        falling back to world y when x is nearly parallel to the normal.
        """
        origin = -self.offset * self.normal
        for axis in (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])):
            b1 = axis - np.dot(axis, self.normal) * self.normal
            n1 = np.linalg.norm(b1)
            if n1 > 1e-6:
                b1 = b1 / n1
                break
        b2 = np.cross(self.normal, b1)
        return origin, b1, b2


def inverse_depth_weight(depth: np.ndarray) -> np.ndarray:
    """Default point confidence: nearer observations weigh more."""
    return 1.0 / (1.0 + depth)


def backproject(frame: CameraFrame, pixel_mask: Optional[np.ndarray] = None,
                weight_fn=inverse_depth_weight) -> PointCloud:
    """Backproject valid depth pixels into a world-frame point cloud.

    `pixel_mask` optionally restricts backprojection to a pixel subset.
    """
    k = frame.intrinsics
    sel = frame.depth.valid
    if pixel_mask is not None:
        pixel_mask = np.asarray(pixel_mask, dtype=bool)
        if pixel_mask.shape != sel.shape:
            raise InputError("pixel mask dimensions do not match depth")
        sel = sel & pixel_mask
    vs, us = np.nonzero(sel)
    d = frame.depth.depth[vs, us]
    x = (us - k.cx) / k.fx * d
    y = (vs - k.cy) / k.fy * d
    cam = np.stack([x, y, d], axis=1)
    world = cam @ frame.pose.rotation.T + frame.pose.translation
    if frame.color is not None:
        colors = frame.color[vs, us]
    else:
        colors = np.zeros((len(d), 3))
    return PointCloud(world, colors, weight_fn(d), source=frame.frame_id)


def signed_height(points: np.ndarray, plane: NavigationPlane) -> np.ndarray:
    """Signed distance above the plane, positive along the normal."""
    pts = np.asarray(points, dtype=float)
    return pts @ plane.normal + plane.offset


def plane_coordinates(points: np.ndarray, plane: NavigationPlane) -> np.ndarray:
    """Orthogonal projection onto the plane in its deterministic 2D basis."""
    origin, b1, b2 = plane.basis()
    rel = np.atleast_2d(np.asarray(points, dtype=float)) - origin
    uv = np.stack([rel @ b1, rel @ b2], axis=-1)
    return uv if np.asarray(points).ndim > 1 else uv[0]


def planar_to_world(uv: np.ndarray, plane: NavigationPlane) -> np.ndarray:
    """Lift 2D planar coordinates back onto the 3D plane."""
    origin, b1, b2 = plane.basis()
    uv = np.atleast_2d(np.asarray(uv, dtype=float))
    pts = origin + uv[:, :1] * b1 + uv[:, 1:2] * b2
    return pts


def project_to_image(points: np.ndarray, frame: CameraFrame) -> tuple[np.ndarray, np.ndarray]:
    """Project world points into the frame.

    Returns (pixels (N, 2), in_front (N,) bool); pixels for behind-camera
    points are undefined and flagged False.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cam = (pts - frame.pose.translation) @ frame.pose.rotation
    z = cam[:, 2]
    in_front = z > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        u = frame.intrinsics.fx * cam[:, 0] / z + frame.intrinsics.cx
        v = frame.intrinsics.fy * cam[:, 1] / z + frame.intrinsics.cy
    return np.stack([u, v], axis=1), in_front


# --------------------------------------------------------------------------
# RANSAC plane fitting


def _plane_from_triplet(p0, p1, p2):
    n = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        return None
    n = n / norm
    return n, -float(np.dot(n, p0))


def _refit_plane(points: np.ndarray):
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid, full_matrices=False)
    n = vt[-1]
    return n, -float(np.dot(n, centroid))


def _orient(normal, offset, camera_origins):
    if camera_origins is not None and len(camera_origins):
        h = np.mean(np.asarray(camera_origins, dtype=float) @ normal + offset)
        if h < 0:
            return -normal, -offset
    elif normal[2] < 0:
        # no camera evidence: prefer an upward-pointing normal
        return -normal, -offset
    return normal, offset


def fit_plane_ransac(cloud: PointCloud, iterations: int = 512,
                     inlier_threshold: float = 0.02, seed: int = 0,
                     camera_origins: Optional[np.ndarray] = None) -> NavigationPlane:
    """RANSAC plane fit with least-squares refit on the inlier set.

    The normal is oriented so camera origins sit at positive signed height.
    Deterministic for a fixed seed; when the number of 3-point hypotheses is
    at most `iterations`, all of them are tried exhaustively.
    """
    pts = cloud.points
    n_pts = len(pts)
    if n_pts < 3:
        raise PlanningError("plane fit needs at least 3 points")

    n_triples = n_pts * (n_pts - 1) * (n_pts - 2) // 6
    if n_triples <= iterations:
        samples = list(combinations(range(n_pts), 3))
    else:
        rng = np.random.default_rng(seed)
        samples = [rng.choice(n_pts, size=3, replace=False) for _ in range(iterations)]

    best = None  # (count, normal, offset)
    for idx in samples:
        hyp = _plane_from_triplet(pts[idx[0]], pts[idx[1]], pts[idx[2]])
        if hyp is None:
            continue
        n, d = hyp
        count = int(np.count_nonzero(np.abs(pts @ n + d) <= inlier_threshold))
        if best is None or count > best[0]:
            best = (count, n, d)
    if best is None:
        raise PlanningError("all plane samples degenerate")

    count, n, d = best
    inliers = np.abs(pts @ n + d) <= inlier_threshold
    if np.count_nonzero(inliers) >= 3:
        rn, rd = _refit_plane(pts[inliers])
        # keep the refit only if it does not lose inliers
        if np.count_nonzero(np.abs(pts @ rn + rd) <= inlier_threshold) >= count:
            n, d = rn, rd
    n, d = _orient(n, d, camera_origins)
    return NavigationPlane(n, d)


# --------------------------------------------------------------------------
# RANSAC homography fitting


@dataclass(frozen=True)
class Homography:
    matrix: np.ndarray  # 3x3, element (2,2) normalized to 1
    inlier_count: int
    inlier_fraction: float

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float).reshape(3, 3)
        if abs(m[2, 2]) < 1e-12 or abs(np.linalg.det(m)) < 1e-12:
            raise PlanningError("homography is singular")
        m = m / m[2, 2]
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class Correspondence:
    src: tuple[float, float]
    dst: tuple[float, float]


def apply_homography(h: Homography, points: np.ndarray) -> np.ndarray:
    """Projective transform with perspective division."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    hom = np.hstack([pts, np.ones((len(pts), 1))]) @ h.matrix.T
    den = hom[:, 2]
    if np.any(np.abs(den) < 1e-12):
        raise PlanningError("point mapped to the line at infinity")
    return hom[:, :2] / den[:, None]


def _normalization(pts: np.ndarray) -> np.ndarray:
    centroid = pts.mean(axis=0)
    scale = np.sqrt(2.0) / max(np.mean(np.linalg.norm(pts - centroid, axis=1)), 1e-12)
    t = np.array([[scale, 0.0, -scale * centroid[0]],
                  [0.0, scale, -scale * centroid[1]],
                  [0.0, 0.0, 1.0]])
    return t


def _dlt(src: np.ndarray, dst: np.ndarray) -> Optional[np.ndarray]:
    """Normalized direct linear transform; None on degenerate input."""
    ts, td = _normalization(src), _normalization(dst)
    s = np.hstack([src, np.ones((len(src), 1))]) @ ts.T
    d = np.hstack([dst, np.ones((len(dst), 1))]) @ td.T
    a = []
    for (sx, sy, _), (dx, dy, _) in zip(s, d):
        a.append([-sx, -sy, -1, 0, 0, 0, dx * sx, dx * sy, dx])
        a.append([0, 0, 0, -sx, -sy, -1, dy * sx, dy * sy, dy])
    a = np.asarray(a)
    _, sv, vt = np.linalg.svd(a)
    if sv[-2] < 1e-10:  # rank-deficient configuration
        return None
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(td) @ hn @ ts
    if abs(h[2, 2]) < 1e-12:
        return None
    return h / h[2, 2]


def _transfer_errors(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    hom = np.hstack([src, np.ones((len(src), 1))]) @ h.T
    den = hom[:, 2]
    bad = np.abs(den) < 1e-12
    den = np.where(bad, 1.0, den)
    err = np.linalg.norm(hom[:, :2] / den[:, None] - dst, axis=1)
    err[bad] = np.inf
    return err


def fit_homography_ransac(matches: list[Correspondence],
                          max_features: int = 400,
                          min_inliers: int = 20,
                          inlier_threshold: float = 3.0,
                          center_shift_limit: float = 0.35,
                          image_size: tuple[int, int] = (640, 480),
                          iterations: int = 2000,
                          seed: int = 0) -> Homography:
    """RANSAC homography with inlier-count and center-shift acceptance gates.

    Keeps at most `max_features` matches, requires `min_inliers` inliers, and
    rejects fits whose transferred image center shifts by more than
    `center_shift_limit` times the image diagonal. Raises GateRejection on
    gate failure.
    """
    if len(matches) < 4:
        raise PlanningError("homography fit needs at least 4 matches")
    matches = matches[:max_features]
    src = np.array([m.src for m in matches], dtype=float)
    dst = np.array([m.dst for m in matches], dtype=float)

    rng = np.random.default_rng(seed)
    best = None  # (count, -mean_inlier_err, h)
    for _ in range(iterations):
        idx = rng.choice(len(src), size=4, replace=False)
        h = _dlt(src[idx], dst[idx])
        if h is None:
            continue
        err = _transfer_errors(h, src, dst)
        inl = err <= inlier_threshold
        count = int(np.count_nonzero(inl))
        if count < 4:
            continue
        key = (count, -float(err[inl].mean()))
        if best is None or key > best[0]:
            best = (key, h, inl)
    if best is None:
        raise PlanningError("no valid homography hypothesis found")

    _, h, inl = best
    refit = _dlt(src[inl], dst[inl])
    if refit is not None:
        rerr = _transfer_errors(refit, src, dst)
        rinl = rerr <= inlier_threshold
        if np.count_nonzero(rinl) >= np.count_nonzero(inl):
            h, inl = refit, rinl

    count = int(np.count_nonzero(inl))
    if count < min_inliers:
        raise GateRejection(
            f"only {count} inliers, need {min_inliers}", gate="insufficient_inliers")

    w, hgt = image_size
    center = np.array([w / 2.0, hgt / 2.0])
    diag = float(np.hypot(w, hgt))
    hom = h @ np.array([center[0], center[1], 1.0])
    if abs(hom[2]) < 1e-12:
        raise GateRejection("image center maps to infinity", gate="center_shift")
    shift = float(np.linalg.norm(hom[:2] / hom[2] - center))
    if shift > center_shift_limit * diag:
        raise GateRejection(
            f"center shift {shift:.1f}px exceeds {center_shift_limit:.2f} x diagonal",
            gate="center_shift")

    return Homography(h, count, count / len(src))
