"""Student-facing supervision math: per-hypothesis loss, best-of-K
reduction, final-hypothesis selection, and quality-tiered label filtering."""

from dataclasses import dataclass

import numpy as np

from .errors import InputError

TIERS = ("usable", "borderline", "reject")
SOURCES = ("teacher", "ground_truth")
COMPOSITION_MODES = ("gt_only", "wm_only_usable_borderline",
                     "gt_plus_usable", "gt_plus_usable_borderline")


@dataclass(frozen=True)
class LossParams:
    direction_weight: float = 0.5   # weight on the segment-direction term
    epsilon: float = 1e-8           # segments shorter than this are degenerate

    def __post_init__(self):
        if self.direction_weight < 0 or self.epsilon <= 0:
            raise InputError("invalid loss parameters")


@dataclass
class HypothesisSet:
    """K candidate waypoint sequences with normalized confidences."""

    trajectories: np.ndarray  # (K, T, 2)
    confidences: np.ndarray   # (K,), positive, sums to 1
    start: np.ndarray         # shared start point, anchors the first segment

    def __post_init__(self):
        self.trajectories = np.asarray(self.trajectories, dtype=float)
        self.confidences = np.asarray(self.confidences, dtype=float).reshape(-1)
        self.start = np.asarray(self.start, dtype=float).reshape(2)
        if self.trajectories.ndim != 3 or self.trajectories.shape[2] != 2:
            raise InputError("trajectories must have shape (K, T, 2)")
        k = self.trajectories.shape[0]
        if k < 1 or len(self.confidences) != k:
            raise InputError("need one confidence per hypothesis")
        if np.any(self.confidences <= 0) or abs(self.confidences.sum() - 1.0) > 1e-6:
            raise InputError("confidences must be positive and sum to 1")

    @property
    def k(self) -> int:
        return self.trajectories.shape[0]


@dataclass(frozen=True)
class PseudoLabel:
    scene_id: str
    points: np.ndarray  # (T, 2)
    tier: str           # usable | borderline | reject
    source: str         # teacher | ground_truth
    frame: str = "image"

    def __post_init__(self):
        if self.tier not in TIERS:
            raise InputError(f"unknown tier {self.tier!r}")
        if self.source not in SOURCES:
            raise InputError(f"unknown source {self.source!r}")
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float).reshape(-1, 2))


def hypothesis_loss(pred: np.ndarray, start: np.ndarray, target: np.ndarray,
                    params: LossParams = LossParams()) -> float:
    """Waypoint regression plus segment-direction consistency.

    Both sequences are anchored at the shared start point, so the first
    segment direction is defined. Degenerate segments (either delta shorter
    than epsilon) contribute zero direction cost.
    """
    pred = np.asarray(pred, dtype=float).reshape(-1, 2)
    target = np.asarray(target, dtype=float).reshape(-1, 2)
    if len(pred) == 0 or len(pred) != len(target):
        raise InputError("pred and target must be nonempty and equal length")
    start = np.asarray(start, dtype=float).reshape(1, 2)
    t = len(pred)

    reg = float(np.mean(np.linalg.norm(pred - target, axis=1)))

    dp = np.diff(np.vstack([start, pred]), axis=0)
    dt = np.diff(np.vstack([start, target]), axis=0)
    np_len = np.linalg.norm(dp, axis=1)
    nt_len = np.linalg.norm(dt, axis=1)
    ok = (np_len >= params.epsilon) & (nt_len >= params.epsilon)
    u = dp[ok] / np_len[ok, None]
    v = dt[ok] / nt_len[ok, None]
    # 1 - cos = ||u - v||^2 / 2 for unit vectors; exact zero for equal segments
    direction = float(np.sum(np.sum((u - v) ** 2, axis=1) / 2.0) / t)
    return reg + params.direction_weight * direction


def best_of_k_loss(batch: list[tuple[HypothesisSet, np.ndarray]],
                   params: LossParams = LossParams()) -> float:
    """Batch mean of the per-sample minimum hypothesis loss."""
    if not batch:
        raise InputError("batch must be nonempty")
    totals = []
    for hyps, target in batch:
        losses = [hypothesis_loss(hyps.trajectories[k], hyps.start, target, params)
                  for k in range(hyps.k)]
        totals.append(min(losses))
    return float(np.mean(totals))


def select_final(h: HypothesisSet) -> np.ndarray:
    """Highest-confidence hypothesis; ties go to the smallest index."""
    return h.trajectories[int(np.argmax(h.confidences))]


def compose_training_set(gt: list[PseudoLabel], wm: list[PseudoLabel],
                         mode: str) -> list[PseudoLabel]:
    """Filtered union of ground-truth and teacher labels per ablation mode.

    Reject-tier labels are always excluded; output order is deterministic
    (scene id, then source).
    """
    if mode not in COMPOSITION_MODES:
        raise InputError(f"unknown composition mode {mode!r}")
    selected: list[PseudoLabel] = []
    if mode != "wm_only_usable_borderline":
        selected.extend(l for l in gt if l.tier != "reject")
    if mode == "gt_plus_usable":
        selected.extend(l for l in wm if l.tier == "usable")
    elif mode in ("gt_plus_usable_borderline", "wm_only_usable_borderline"):
        selected.extend(l for l in wm if l.tier in ("usable", "borderline"))
    return sorted(selected, key=lambda l: (l.scene_id, l.source))
