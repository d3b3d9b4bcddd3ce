"""Top-down metric grid: height-band filtering, confidence-weighted fusion,
mask rasterization, and target-region consolidation."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import InputError
from .geometry import (CameraFrame, LabeledMask, NavigationPlane, PointCloud,
                       backproject, plane_coordinates, signed_height)

EIGHT_CONNECTED = np.ones((3, 3), dtype=int)


@dataclass(frozen=True)
class HeightBand:
    """Retained band of signed heights relative to the navigation plane."""

    low: float = -0.5
    high: float = 1.5

    def __post_init__(self):
        if not self.low < self.high:
            raise InputError("height band low must be below high")


@dataclass
class BevGrid:
    """Metric top-down accumulator on the navigation plane.

    Cell (r, c) covers the half-open square
    [origin_u + c*res, origin_u + (c+1)*res) x [origin_v + r*res, ...).
    """

    origin: np.ndarray  # planar (u, v) of cell (0, 0) corner, meters
    resolution: float
    rows: int
    cols: int
    color_sum: np.ndarray = field(default=None)
    weight_sum: np.ndarray = field(default=None)
    observation_count: np.ndarray = field(default=None)
    target_support: np.ndarray = field(default=None)
    obstacle_support: np.ndarray = field(default=None)
    discarded_out_of_band: int = 0
    discarded_out_of_grid: int = 0

    def __post_init__(self):
        if self.resolution <= 0:
            raise InputError("grid resolution must be positive")
        self.origin = np.asarray(self.origin, dtype=float).reshape(2)
        shape = (self.rows, self.cols)
        if self.color_sum is None:
            self.color_sum = np.zeros(shape + (3,))
        if self.weight_sum is None:
            self.weight_sum = np.zeros(shape)
        if self.observation_count is None:
            self.observation_count = np.zeros(shape, dtype=np.int64)
        if self.target_support is None:
            self.target_support = np.zeros(shape, dtype=np.int64)
        if self.obstacle_support is None:
            self.obstacle_support = np.zeros(shape, dtype=np.int64)

    @classmethod
    def from_footprint(cls, planar_points: np.ndarray, start: np.ndarray,
                       resolution: float, padding: float = 0.5) -> "BevGrid":
        """Fixed extent from a bounding box around the start and seed points."""
        pts = np.vstack([np.atleast_2d(planar_points), np.asarray(start, dtype=float).reshape(1, 2)])
        lo = pts.min(axis=0) - padding
        hi = pts.max(axis=0) + padding
        cols = int(np.ceil((hi[0] - lo[0]) / resolution))
        rows = int(np.ceil((hi[1] - lo[1]) / resolution))
        return cls(origin=lo, resolution=resolution, rows=rows, cols=cols)

    def cell_of(self, uv: np.ndarray) -> np.ndarray:
        """Planar coordinates -> (row, col), floor convention."""
        uv = np.atleast_2d(np.asarray(uv, dtype=float))
        cols = np.floor((uv[:, 0] - self.origin[0]) / self.resolution).astype(int)
        rows = np.floor((uv[:, 1] - self.origin[1]) / self.resolution).astype(int)
        return np.stack([rows, cols], axis=1)

    def cell_center(self, rc: np.ndarray) -> np.ndarray:
        """(row, col) -> planar coordinates of the cell center."""
        rc = np.atleast_2d(np.asarray(rc, dtype=float))
        u = self.origin[0] + (rc[:, 1] + 0.5) * self.resolution
        v = self.origin[1] + (rc[:, 0] + 0.5) * self.resolution
        return np.stack([u, v], axis=1)

    def in_bounds(self, rc: np.ndarray) -> np.ndarray:
        rc = np.atleast_2d(rc)
        return (rc[:, 0] >= 0) & (rc[:, 0] < self.rows) & (rc[:, 1] >= 0) & (rc[:, 1] < self.cols)


def _band_filtered_cells(grid: BevGrid, points: np.ndarray, plane: NavigationPlane,
                         band: HeightBand):
    """Apply the height band and grid bounds; returns (rows, cols, keep mask)."""
    h = signed_height(points, plane)
    in_band = (h >= band.low) & (h <= band.high)
    uv = plane_coordinates(points, plane)
    rc = grid.cell_of(uv)
    in_grid = grid.in_bounds(rc)
    keep = in_band & in_grid
    grid.discarded_out_of_band += int(np.count_nonzero(~in_band))
    grid.discarded_out_of_grid += int(np.count_nonzero(in_band & ~in_grid))
    return rc[keep, 0], rc[keep, 1], keep


def accumulate_frame(grid: BevGrid, cloud: PointCloud, plane: NavigationPlane,
                     band: HeightBand) -> BevGrid:
    """Fuse a frame's point cloud into the grid with confidence weighting."""
    rows, cols, keep = _band_filtered_cells(grid, cloud.points, plane, band)
    w = cloud.weights[keep]
    np.add.at(grid.color_sum, (rows, cols), w[:, None] * cloud.colors[keep])
    np.add.at(grid.weight_sum, (rows, cols), w)
    np.add.at(grid.observation_count, (rows, cols), 1)
    return grid


def fused_color(grid: BevGrid, cell: tuple[int, int]) -> Optional[np.ndarray]:
    """Confidence-weighted mean color; None for never-observed cells."""
    r, c = cell
    w = grid.weight_sum[r, c]
    if w <= 0:
        return None
    return grid.color_sum[r, c] / w


def fused_color_image(grid: BevGrid) -> np.ndarray:
    """Full fused-color render; unobserved cells black."""
    img = np.zeros((grid.rows, grid.cols, 3))
    obs = grid.weight_sum > 0
    img[obs] = grid.color_sum[obs] / grid.weight_sum[obs, None]
    return img


def rasterize_mask(grid: BevGrid, mask: LabeledMask, frame: CameraFrame,
                   plane: NavigationPlane, band: HeightBand) -> BevGrid:
    """Backproject masked pixels and count support in their BEV cells."""
    if mask.mask.shape != (frame.intrinsics.height, frame.intrinsics.width):
        raise InputError("mask dimensions do not match frame")
    cloud = backproject(frame, pixel_mask=mask.mask)
    if len(cloud) == 0:
        return grid
    rows, cols, _ = _band_filtered_cells(grid, cloud.points, plane, band)
    layer = grid.target_support if mask.kind == "target" else grid.obstacle_support
    np.add.at(layer, (rows, cols), 1)
    return grid


@dataclass
class TargetRegion:
    cells: np.ndarray    # (N, 2) (row, col)
    centroid: np.ndarray  # planar meters; undefined when empty

    @property
    def is_empty(self) -> bool:
        return len(self.cells) == 0


def consolidate_target(grid: BevGrid, min_support: int = 3) -> TargetRegion:
    """Threshold target support, close small gaps, keep the largest component."""
    support = grid.target_support >= min_support
    if not support.any():
        return TargetRegion(np.zeros((0, 2), dtype=int), np.zeros(2))
    closed = ndimage.binary_closing(support, structure=EIGHT_CONNECTED)
    closed |= support  # closing must not drop original evidence
    labels, n = ndimage.label(closed, structure=EIGHT_CONNECTED)
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, index=np.arange(1, n + 1))
    keep = int(np.argmax(sizes)) + 1
    rows, cols = np.nonzero(labels == keep)
    cells = np.stack([rows, cols], axis=1)
    centroid = grid.cell_center(cells).mean(axis=0)
    return TargetRegion(cells, centroid)
