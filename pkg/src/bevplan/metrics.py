"""Trajectory error metrics: ADE, FDE, and path-length-normalized DTW.

Metric functions accept either Trajectory objects or raw (N, 2) point
arrays; raw arrays may contain repeats and single points, which planner
trajectories themselves disallow.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .fmm import Trajectory


@dataclass(frozen=True)
class MetricReport:
    ade: float
    fde: float
    dtw_norm: float
    length_pred: int
    length_gt: int


def _points(traj) -> np.ndarray:
    pts = traj.points if isinstance(traj, Trajectory) else np.atleast_2d(np.asarray(traj, dtype=float))
    if pts.size == 0:
        raise InputError("trajectory must be nonempty")
    return pts


def _check_frames(pred, gt):
    if isinstance(pred, Trajectory) and isinstance(gt, Trajectory) and pred.frame != gt.frame:
        raise InputError("trajectories are in different frames")


def ade(pred, gt) -> float:
    """Mean Euclidean displacement over index-aligned waypoints."""
    _check_frames(pred, gt)
    p, g = _points(pred), _points(gt)
    if len(p) != len(g):
        raise InputError("ADE requires equal-length trajectories; resample first")
    return float(np.mean(np.linalg.norm(p - g, axis=1)))


def fde(pred, gt) -> float:
    """Euclidean displacement between final waypoints."""
    _check_frames(pred, gt)
    return float(np.linalg.norm(_points(pred)[-1] - _points(gt)[-1]))


def dtw_alignment(pred: np.ndarray, gt: np.ndarray) -> tuple[float, int]:
    """Classic DTW with Euclidean local cost.

    Returns (total cost of the optimal warping path, number of aligned pairs
    on that path). Backtracking prefers diagonal over vertical over
    horizontal steps so the path length is deterministic under ties.
    """
    n, m = len(pred), len(gt)
    local = np.linalg.norm(pred[:, None, :] - gt[None, :, :], axis=2)
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            acc[i, j] = local[i - 1, j - 1] + min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
    i, j, length = n, m, 0
    while True:
        length += 1
        if i == 1 and j == 1:
            break
        if i > 1 and j > 1 and acc[i - 1, j - 1] <= acc[i - 1, j] and acc[i - 1, j - 1] <= acc[i, j - 1]:
            i, j = i - 1, j - 1
        elif i > 1 and (j == 1 or acc[i - 1, j] <= acc[i, j - 1]):
            i -= 1
        else:
            j -= 1
    return float(acc[n, m]), length


def dtw_norm(pred, gt) -> float:
    """DTW cost divided by the warping-path length."""
    _check_frames(pred, gt)
    total, length = dtw_alignment(_points(pred), _points(gt))
    return total / length


def evaluate(pred, gt) -> MetricReport:
    """Full metric report for one equal-length trajectory pair."""
    return MetricReport(ade=ade(pred, gt), fde=fde(pred, gt),
                        dtw_norm=dtw_norm(pred, gt),
                        length_pred=len(_points(pred)), length_gt=len(_points(gt)))
