"""Eikonal arrival-time solve on the cost map, goal selection, path
extraction, and waypoint post-processing.

The solver is a first-order upwind fast-marching sweep on an 8-connected
stencil: each cell takes the better of the two-sided quadratic axis update
and one-sided relaxations over all eight neighbors. The one-sided diagonal
candidates keep arrival times at or below the 8-neighbor Dijkstra cost.
"""

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .bev import TargetRegion
from .costmap import CostMap
from .errors import InputError, PlanningError
from .geometry import CameraFrame, NavigationPlane, planar_to_world, project_to_image

SQRT2 = float(np.sqrt(2.0))
NEIGHBORS8 = [(-1, -1, SQRT2), (-1, 0, 1.0), (-1, 1, SQRT2),
              (0, -1, 1.0), (0, 1, 1.0),
              (1, -1, SQRT2), (1, 0, 1.0), (1, 1, SQRT2)]


@dataclass
class ArrivalField:
    times: np.ndarray       # (rows, cols); inf = unreachable
    start: tuple[int, int]

    def reachable(self, rc) -> bool:
        return np.isfinite(self.times[rc[0], rc[1]])


@dataclass
class Trajectory:
    """Ordered waypoints tagged with their frame of reference."""

    points: np.ndarray  # (N, 2)
    frame: str          # "plane" | "image"

    def __post_init__(self):
        if self.frame not in ("plane", "image"):
            raise InputError(f"unknown trajectory frame {self.frame!r}")
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if not np.all(np.isfinite(pts)):
            raise InputError("trajectory points must be finite")
        # drop consecutive duplicates
        if len(pts) > 1:
            keep = np.ones(len(pts), dtype=bool)
            keep[1:] = np.any(pts[1:] != pts[:-1], axis=1)
            pts = pts[keep]
        if len(pts) < 2:
            raise InputError("trajectory needs at least 2 distinct points")
        self.points = pts

    def __len__(self) -> int:
        return len(self.points)


def solve_eikonal(cm: CostMap, start: tuple[int, int]) -> ArrivalField:
    """Fast-marching arrival times from the start cell; blocked cells never
    enter the narrow band."""
    r0, c0 = start
    if cm.blocked[r0, c0]:
        raise PlanningError("start cell is blocked")
    rows, cols = cm.rows, cm.cols
    # flat python lists: the sweep is scalar-heavy and numpy indexing
    # dominates the runtime otherwise
    blocked = cm.blocked.ravel().tolist()
    fvals = (cm.cost * cm.resolution).ravel().tolist()
    inf = math.inf
    t = [inf] * (rows * cols)
    accepted = bytearray(rows * cols)
    sqrt = math.sqrt
    t[r0 * cols + c0] = 0.0
    band = [(0.0, r0 * cols + c0)]

    while band:
        tv, flat = heapq.heappop(band)
        if accepted[flat]:
            continue
        accepted[flat] = 1
        r, c = divmod(flat, cols)
        for dr, dc, _ in NEIGHBORS8:
            nr, nc = r + dr, c + dc
            if nr < 0 or nr >= rows or nc < 0 or nc >= cols:
                continue
            nf = nr * cols + nc
            if blocked[nf] or accepted[nf]:
                continue
            f = fvals[nf]
            # two-sided quadratic update from axis neighbors
            tx = t[nf - 1] if nc > 0 else inf
            v = t[nf + 1] if nc < cols - 1 else inf
            if v < tx:
                tx = v
            ty = t[nf - cols] if nr > 0 else inf
            v = t[nf + cols] if nr < rows - 1 else inf
            if v < ty:
                ty = v
            d = tx - ty if tx > ty else ty - tx
            if tx == inf or ty == inf or d >= f:
                cand = (tx if tx < ty else ty) + f
            else:
                cand = 0.5 * (tx + ty + sqrt(2.0 * f * f - d * d))
            # one-sided 8-neighbor relaxations
            for er, ec, length in NEIGHBORS8:
                mr, mc = nr + er, nc + ec
                if 0 <= mr < rows and 0 <= mc < cols:
                    v = t[mr * cols + mc] + length * f
                    if v < cand:
                        cand = v
            if cand < t[nf]:
                t[nf] = cand
                heapq.heappush(band, (cand, nf))

    return ArrivalField(times=np.array(t).reshape(rows, cols), start=(r0, c0))


def select_goal(region: TargetRegion, cm: CostMap, field: ArrivalField) -> tuple[int, int]:
    """Pick the planning goal next to the target region.

    Candidates are free reachable cells outside the region that touch its
    boundary (8-adjacency); the winner is nearest the region centroid, ties
    broken by smaller arrival time, then row-major index. With no candidate,
    fall back to the reachable free cell nearest the centroid.
    """
    if region.is_empty:
        raise PlanningError("target region is empty")
    member = set(map(tuple, region.cells))
    boundary = []
    for r, c in region.cells:
        for dr, dc, _ in NEIGHBORS8:
            nb = (r + dr, c + dc)
            if nb not in member:
                boundary.append((r, c))
                break
    candidates = set()
    for r, c in boundary:
        for dr, dc, _ in NEIGHBORS8:
            nr, nc = r + dr, c + dc
            if 0 <= nr < cm.rows and 0 <= nc < cm.cols and (nr, nc) not in member:
                if not cm.blocked[nr, nc] and np.isfinite(field.times[nr, nc]):
                    candidates.add((nr, nc))

    if not candidates:
        free_r, free_c = np.nonzero(~cm.blocked & np.isfinite(field.times))
        if len(free_r) == 0:
            raise PlanningError("goal unreachable: no reachable free cell")
        candidates = set(zip(free_r.tolist(), free_c.tolist()))

    cand = sorted(candidates)
    centers = cm.cell_center(np.array(cand))
    dists = np.linalg.norm(centers - np.asarray(region.centroid), axis=1)
    best = min(range(len(cand)),
               key=lambda i: (dists[i], field.times[cand[i][0], cand[i][1]],
                              cand[i][0] * cm.cols + cand[i][1]))
    return cand[best]


def extract_path(field: ArrivalField, goal: tuple[int, int]) -> list[tuple[int, int]]:
    """Discrete steepest descent from goal to start over 8-neighbors."""
    t = field.times
    rows, cols = t.shape
    if not np.isfinite(t[goal[0], goal[1]]):
        raise PlanningError("goal is unreachable")
    path = [tuple(goal)]
    cur = tuple(goal)
    while cur != field.start:
        r, c = cur
        best = None
        for dr, dc, _ in NEIGHBORS8:
            nr, nc = r + dr, c + dc
            if 0 <= nr < rows and 0 <= nc < cols and np.isfinite(t[nr, nc]):
                key = (t[nr, nc], nr * cols + nc)
                if best is None or key < best[0]:
                    best = (key, (nr, nc))
        if best is None or best[0][0] >= t[r, c]:
            raise PlanningError("arrival-field descent stagnated before the start")
        cur = best[1]
        path.append(cur)
    path.reverse()
    return path


def _moving_average(pts: np.ndarray, window: int) -> np.ndarray:
    half = window // 2
    out = np.empty_like(pts)
    for i in range(len(pts)):
        lo, hi = max(0, i - half), min(len(pts), i + half + 1)
        out[i] = pts[lo:hi].mean(axis=0)
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def _enters_blocked(a: np.ndarray, b: np.ndarray, cm: CostMap) -> bool:
    n = max(2, int(np.ceil(np.linalg.norm(b - a) / (0.25 * cm.resolution))) + 1)
    for s in np.linspace(0.0, 1.0, n):
        r, c = cm.cell_of(a + s * (b - a))
        if r < 0 or r >= cm.rows or c < 0 or c >= cm.cols or cm.blocked[r, c]:
            return True
    return False


def resample_by_arc_length(pts: np.ndarray, num_points: int) -> np.ndarray:
    """Uniform arc-length resampling; endpoints preserved exactly."""
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        return np.repeat(pts[:1], num_points, axis=0)
    targets = np.linspace(0.0, total, num_points)
    out = np.empty((num_points, 2))
    out[0], out[-1] = pts[0], pts[-1]
    idx = np.searchsorted(cum, targets[1:-1], side="right") - 1
    idx = np.clip(idx, 0, len(seg) - 1)
    frac = (targets[1:-1] - cum[idx]) / np.where(seg[idx] > 0, seg[idx], 1.0)
    out[1:-1] = pts[idx] + frac[:, None] * (pts[idx + 1] - pts[idx])
    return out


def smooth_and_resample(path: list[tuple[int, int]], cm: CostMap,
                        window: int = 5, num_waypoints: int = 16) -> Trajectory:
    """Moving-average smoothing (endpoints pinned) and uniform arc-length
    resampling to a sparse waypoint sequence in the plane frame.

    Smoothed spans that enter blocked cells fall back to the raw polyline.
    """
    if not path:
        raise InputError("path must be nonempty")
    if window % 2 == 0:
        raise InputError("smoothing window must be odd")
    if num_waypoints < 2:
        raise InputError("need at least 2 waypoints")
    raw = cm.cell_center(np.asarray(path, dtype=float))
    if len(raw) == 1:
        raw = np.vstack([raw, raw + 1e-9 * cm.resolution])
    smoothed = _moving_average(raw, window)
    # audit: revert spans whose smoothed segments cross blocked cells
    for i in range(len(smoothed) - 1):
        if _enters_blocked(smoothed[i], smoothed[i + 1], cm):
            smoothed[i] = raw[i]
            smoothed[i + 1] = raw[i + 1]
    pts = resample_by_arc_length(smoothed, num_waypoints)
    return Trajectory(points=pts, frame="plane")


def trajectory_to_image(traj: Trajectory, frame: CameraFrame,
                        plane: NavigationPlane) -> tuple[Trajectory, int]:
    """Lift planar waypoints onto the 3D plane and project into the frame.

    Returns the image-frame trajectory and the count of dropped
    behind-camera points.
    """
    if traj.frame != "plane":
        raise InputError("expected a plane-frame trajectory")
    world = planar_to_world(traj.points, plane)
    pixels, in_front = project_to_image(world, frame)
    dropped = int(np.count_nonzero(~in_front))
    if dropped == len(pixels):
        raise PlanningError("all trajectory points are behind the camera")
    return Trajectory(points=pixels[in_front], frame="image"), dropped
