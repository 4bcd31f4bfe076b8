"""Depth-camera obstacle tracking and pyramid-based velocity planning.

The package splits into a perception side (point-cloud filtering, density
clustering, multi-obstacle tracking with Kalman filters and track-point
velocity estimation), a planning side (forbidden-pyramid velocity selection
and jerk-limited motion primitives), and a deterministic synthetic-camera
simulator that closes the loop and scores the result.
"""

from .camera import CameraModel
from .cloud_pipeline import (Cluster, FilterConfig, PointCloudFrame,
                             angular_rate_gate, dbscan_cluster, distance_filter,
                             ego_motion_compensate, fov_overlap_filter,
                             outlier_filter, overlap_frames, process_frame,
                             transform_to_world, voxel_filter)
from .episode import EpisodeConfig, EpisodeLog, SimConfig, run_episode
from .geometry import AABB, Pose
from .metrics import Metrics, score_episode, score_motion, score_tracking
from .motion_optimizer import (MotionPrimitive, OptimizerConfig,
                               braking_primitive, sample_trajectory,
                               solve_motion)
from .render import render_cloud
from .tracker import (KalmanState, ObstacleSnapshot, PerceptionOutput,
                      TrackedObstacle, TrackerConfig, TrackerState,
                      compute_feature, estimate_velocity, match_clusters,
                      perception_step, track_point)
from .velocity_planner import (PlannerConfig, PlanResult, Pyramid, TimingModel,
                               VehicleState, build_pyramid, feasibility_check,
                               lag_displacements, lag_time, plan_velocity,
                               point_in_pyramid, propose_velocities,
                               reachability_check)
from .world import Mover, Scenario, StaticBody, load_scenario, save_scenario

__version__ = "0.1.0"
