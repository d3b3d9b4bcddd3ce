"""Structured errors shared across the pipeline.

Exit-code mapping used by the CLI: InputError -> 2, PlanningError -> 3,
GateRejection -> 4.
"""


class BevPlanError(Exception):
    """Base class for all structured errors raised by this package."""

    def __init__(self, message: str, stage: str | None = None):
        super().__init__(message)
        self.stage = stage


class InputError(BevPlanError):
    """Malformed or inconsistent input data (parse failures, dimension mismatches)."""


class PlanningError(BevPlanError):
    """Geometric or planning failure (fit failure, no traversable space, unreachable goal)."""


class GateRejection(BevPlanError):
    """A fit was produced but failed an acceptance gate.

    `gate` names the failed gate, e.g. "insufficient_inliers" or "center_shift".
    """

    def __init__(self, message: str, gate: str, stage: str | None = None):
        super().__init__(message, stage=stage)
        self.gate = gate
