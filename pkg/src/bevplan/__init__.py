"""Geometric navigation-supervision pipeline.

Depth-to-world backprojection, ground-plane estimation, BEV cost-map
construction, fast-marching planning, trajectory metrics, homography
alignment, and best-of-K supervision losses, with a synthetic-scene
generator for oracle-based verification.
"""

from .bev import BevGrid, HeightBand, TargetRegion, accumulate_frame, consolidate_target
from .costmap import CostMap, CostParams, build_costmap, distance_transform
from .errors import BevPlanError, GateRejection, InputError, PlanningError
from .fmm import (ArrivalField, Trajectory, extract_path, select_goal,
                  smooth_and_resample, solve_eikonal, trajectory_to_image)
from .geometry import (CameraFrame, CameraIntrinsics, Correspondence, DepthFrame,
                       Homography, LabeledMask, NavigationPlane, PointCloud, Pose,
                       apply_homography, backproject, fit_homography_ransac,
                       fit_plane_ransac, plane_coordinates, project_to_image,
                       signed_height)
from .metrics import MetricReport, ade, dtw_norm, fde
from .pipeline import PlanResult, run_plan
from .supervision import (HypothesisSet, LossParams, PseudoLabel, best_of_k_loss,
                          compose_training_set, hypothesis_loss, select_final)
from .synth import Box, SceneSpec, TargetPatch, analytic_footprints, builtin_scenes, render

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
