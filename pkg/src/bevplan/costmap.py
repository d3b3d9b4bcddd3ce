"""Planner cost field: obstacle/unobserved blocking, safety-margin inflation,
and a linear near-obstacle penalty ramp."""

from dataclasses import dataclass

import numpy as np

from .bev import BevGrid
from .errors import InputError, PlanningError


@dataclass(frozen=True)
class CostParams:
    safety_margin: float = 0.20    # meters of hard inflation around blocked cells
    penalty_radius: float = 0.50   # meters over which the soft penalty decays
    penalty_gain: float = 4.0      # cost at distance 0 is 1 + penalty_gain

    def __post_init__(self):
        if self.safety_margin < 0 or self.penalty_radius < self.safety_margin:
            raise InputError("need 0 <= safety_margin <= penalty_radius")
        if self.penalty_gain < 0:
            raise InputError("penalty gain must be non-negative")


@dataclass
class CostMap:
    resolution: float
    origin: np.ndarray     # planar (u, v) of cell (0, 0) corner
    blocked: np.ndarray    # (rows, cols) bool
    cost: np.ndarray       # (rows, cols) float, inf on blocked cells

    @property
    def rows(self) -> int:
        return self.blocked.shape[0]

    @property
    def cols(self) -> int:
        return self.blocked.shape[1]

    def cell_center(self, rc) -> np.ndarray:
        rc = np.atleast_2d(np.asarray(rc, dtype=float))
        u = self.origin[0] + (rc[:, 1] + 0.5) * self.resolution
        v = self.origin[1] + (rc[:, 0] + 0.5) * self.resolution
        return np.stack([u, v], axis=1)

    def cell_of(self, uv) -> tuple[int, int]:
        uv = np.asarray(uv, dtype=float).reshape(2)
        c = int(np.floor((uv[0] - self.origin[0]) / self.resolution))
        r = int(np.floor((uv[1] - self.origin[1]) / self.resolution))
        return r, c


def _edt_1d_sq(f: np.ndarray) -> np.ndarray:
    """Lower envelope of parabolas: 1D squared distance transform.

    Infinite entries contribute no parabola; an all-infinite row stays infinite.
    """
    n = len(f)
    d = np.full(n, np.inf)
    idx = np.nonzero(np.isfinite(f))[0]
    if len(idx) == 0:
        return d
    v = np.zeros(len(idx), dtype=int)
    z = np.empty(len(idx) + 1)
    v[0] = idx[0]
    z[0], z[1] = -np.inf, np.inf
    k = 0
    for q in idx[1:]:
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2 * q - 2 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d[q] = (q - v[k]) ** 2 + f[v[k]]
    return d


def distance_transform(blocked: np.ndarray, resolution: float) -> np.ndarray:
    """Exact Euclidean distance (meters) from each cell center to the nearest
    blocked cell center, two-pass squared-distance algorithm.

    All-free input yields an all-infinite field.
    """
    blocked = np.asarray(blocked, dtype=bool)
    if not blocked.any():
        return np.full(blocked.shape, np.inf)
    sq = np.where(blocked, 0.0, np.inf)
    sq = np.apply_along_axis(_edt_1d_sq, 1, sq)
    sq = np.apply_along_axis(_edt_1d_sq, 0, sq)
    return np.sqrt(sq) * resolution


def build_costmap(grid: BevGrid, params: CostParams = CostParams(),
                  obstacle_threshold: int = 3) -> CostMap:
    """Block obstacle-supported and unobserved cells, inflate by the safety
    margin, and ramp traversal cost near pre-inflation obstacles."""
    pre_blocked = (grid.obstacle_support >= obstacle_threshold) | (grid.observation_count == 0)
    dist = distance_transform(pre_blocked, grid.resolution)
    blocked = pre_blocked | (dist <= params.safety_margin)

    cost = np.ones(blocked.shape)
    if params.penalty_radius > 0:
        with np.errstate(invalid="ignore"):
            ramp = np.maximum(0.0, 1.0 - dist / params.penalty_radius)
        ramp[~np.isfinite(dist)] = 0.0
        cost += params.penalty_gain * ramp
    cost[blocked] = np.inf

    if not (~blocked).any():
        raise PlanningError("no traversable space after blocking and inflation")
    return CostMap(resolution=grid.resolution, origin=grid.origin.copy(),
                   blocked=blocked, cost=cost)
