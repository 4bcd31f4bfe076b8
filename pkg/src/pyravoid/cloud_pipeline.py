"""Point-cloud preprocessing: range/voxel/outlier filters, ego-motion
compensation, world transform, FOV overlap filtering, frame fusion and
density clustering.

Frames hold positions as (N, 3) float arrays and colors as (N, 3) uint8-range
floats; a ``frame`` tag records whether coordinates are camera- or world-frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree

from .camera import CameraModel
from .geometry import AABB, Pose, euler_from_quat, mean_pose, quat_from_euler

log = logging.getLogger(__name__)

CAMERA_FRAME = "camera"
WORLD_FRAME = "world"


@dataclass
class PointCloudFrame:
    """One depth frame: point positions/colors plus the camera pose at capture."""

    timestamp: float
    positions: np.ndarray                 # (N, 3)
    colors: np.ndarray                    # (N, 3), RGB 0..255
    camera_pose: Pose = field(default_factory=Pose)
    frame: str = CAMERA_FRAME

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=float).reshape(-1, 3)
        if self.positions.shape != self.colors.shape:
            raise ValueError("positions and colors must pair one-to-one")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("point positions must be finite")
        if self.frame not in (CAMERA_FRAME, WORLD_FRAME):
            raise ValueError(f"unknown frame tag {self.frame!r}")

    def __len__(self) -> int:
        return self.positions.shape[0]

    def select(self, mask_or_idx) -> "PointCloudFrame":
        return replace(self, positions=self.positions[mask_or_idx],
                       colors=self.colors[mask_or_idx])


@dataclass
class Cluster:
    """A connected group of points, world frame."""

    positions: np.ndarray                 # (N, 3)
    colors: np.ndarray                    # (N, 3)
    timestamp: float

    def __post_init__(self) -> None:
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        self.colors = np.asarray(self.colors, dtype=float).reshape(-1, 3)
        if len(self.positions) == 0:
            raise ValueError("cluster cannot be empty")

    @property
    def centroid(self) -> np.ndarray:
        return self.positions.mean(axis=0)

    @property
    def aabb(self) -> AABB:
        return AABB.from_points(self.positions)

    def __len__(self) -> int:
        return self.positions.shape[0]


@dataclass
class FilterConfig:
    max_range: float = 8.0            # strict < cut on camera-frame range
    voxel_size: float = 0.1
    outlier_radius: float = 0.25
    outlier_min_neighbors: int = 13   # survive iff neighbors (excl. self) > this
    dbscan_eps: float = 0.3
    dbscan_min_pts: int = 18          # core iff points within eps (incl. self) >= this
    omega_max: float = 1.5            # rad/s, per-component angular rate gate


def distance_filter(frame: PointCloudFrame, max_range: float) -> PointCloudFrame:
    """Drop points at camera-frame range >= max_range."""
    if frame.frame != CAMERA_FRAME:
        raise ValueError("distance_filter expects a camera-frame cloud")
    r = np.linalg.norm(frame.positions, axis=1)
    return frame.select(r < max_range)


def voxel_filter(frame: PointCloudFrame, voxel_size: float) -> PointCloudFrame:
    """Keep the first-seen point of every occupied voxel (input order).

    Idempotent: re-running on its own output returns it unchanged.
    """
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    if len(frame) == 0:
        return frame.select(slice(0, 0))
    cells = np.floor(frame.positions / voxel_size).astype(np.int64)
    _, first = np.unique(cells, axis=0, return_index=True)
    return frame.select(np.sort(first))


def outlier_filter(frame: PointCloudFrame, radius: float,
                   min_neighbors: int) -> PointCloudFrame:
    """Keep points with strictly more than min_neighbors others within radius."""
    n = len(frame)
    if n == 0:
        return frame.select(slice(0, 0))
    tree = cKDTree(frame.positions)
    counts = tree.query_ball_point(frame.positions, r=radius,
                                   return_length=True)
    return frame.select(counts - 1 > min_neighbors)  # counts include the point itself


def ego_motion_compensate(pose: Pose, t_gap: float) -> Pose:
    """Advance a pose across the cloud/state timestamp gap.

    Translation advances under constant acceleration; rotation advances each
    Euler axis under constant angular acceleration and renormalizes.
    """
    if not np.isfinite(t_gap):
        raise ValueError("t_gap must be finite")
    if abs(t_gap) >= 0.5:
        raise ValueError(f"t_gap {t_gap:.3f}s exceeds the 0.5s sanity bound")
    dt = float(t_gap)
    out = pose.copy()
    out.translation = pose.translation + pose.velocity * dt + 0.5 * pose.acceleration * dt * dt
    rpy = np.array(euler_from_quat(pose.rotation))
    rpy = rpy + pose.angular_velocity * dt + 0.5 * pose.angular_acceleration * dt * dt
    out.rotation = quat_from_euler(*rpy)
    out.velocity = pose.velocity + pose.acceleration * dt
    out.angular_velocity = pose.angular_velocity + pose.angular_acceleration * dt
    return out


def transform_to_world(frame: PointCloudFrame, pose: Pose) -> PointCloudFrame:
    """Rotate and translate a camera-frame cloud into world coordinates."""
    if frame.frame != CAMERA_FRAME:
        raise ValueError("frame is already world-frame")
    return replace(frame, positions=pose.transform_points(frame.positions),
                   camera_pose=pose, frame=WORLD_FRAME)


def fov_overlap_filter(frame: PointCloudFrame, earlier_pose: Pose,
                       camera: CameraModel) -> PointCloudFrame:
    """Keep only world points that were also inside the earlier frustum."""
    if frame.frame != WORLD_FRAME:
        raise ValueError("fov_overlap_filter expects a world-frame cloud")
    if len(frame) == 0:
        return frame.select(slice(0, 0))
    return frame.select(camera.contains_world(frame.positions, earlier_pose))


def overlap_frames(current: PointCloudFrame, previous: PointCloudFrame) -> PointCloudFrame:
    """Union a frame with its neighbor to densify sparse returns.

    Keeps the newer timestamp and the component-wise mean camera pose.
    """
    if current.frame != WORLD_FRAME or previous.frame != WORLD_FRAME:
        raise ValueError("overlap_frames expects world-frame clouds")
    newer, older = (current, previous) if current.timestamp >= previous.timestamp \
        else (previous, current)
    return PointCloudFrame(
        timestamp=newer.timestamp,
        positions=np.vstack([current.positions, previous.positions]),
        colors=np.vstack([current.colors, previous.colors]),
        camera_pose=mean_pose(newer.camera_pose, older.camera_pose),
        frame=WORLD_FRAME,
    )


def angular_rate_gate(pose: Pose, omega_max: float) -> bool:
    """True when every angular rate component is within the limit (inclusive)."""
    return bool(np.all(np.abs(pose.angular_velocity) <= omega_max))


def _expand_clusters(n: int, neighbors, min_pts: int) -> list[np.ndarray]:
    """Classic density-based expansion given precomputed neighbor lists.

    Points are visited in index order; clusters come out ordered by their
    first core point's index. Noise (never density-reachable from a core
    point) is discarded.
    """
    UNSEEN, NOISE = -2, -1
    labels = np.full(n, UNSEEN, dtype=np.int64)
    cluster_id = 0
    for i in range(n):
        if labels[i] != UNSEEN:
            continue
        if len(neighbors[i]) < min_pts:
            labels[i] = NOISE
            continue
        labels[i] = cluster_id
        seeds = list(neighbors[i])
        k = 0
        while k < len(seeds):
            j = seeds[k]
            k += 1
            if labels[j] == NOISE:
                labels[j] = cluster_id        # border point
            if labels[j] != UNSEEN:
                continue
            labels[j] = cluster_id
            if len(neighbors[j]) >= min_pts:
                seeds.extend(neighbors[j])
        cluster_id += 1
    return [np.flatnonzero(labels == c) for c in range(cluster_id)]


def dbscan_cluster(frame: PointCloudFrame, eps: float, min_pts: int) -> list[Cluster]:
    """Density cluster a world-frame cloud; noise points are dropped.

    A point is core when at least min_pts points (itself included) lie within
    eps. Clusters are returned ordered by first core-point index, so output is
    deterministic for a given input ordering.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    n = len(frame)
    if n == 0:
        return []
    tree = cKDTree(frame.positions)
    neighbors = tree.query_ball_point(frame.positions, r=eps)
    for lst in neighbors:
        lst.sort()
    groups = _expand_clusters(n, neighbors, min_pts)
    return [Cluster(frame.positions[idx], frame.colors[idx], frame.timestamp)
            for idx in groups]


def process_frame(raw: PointCloudFrame, cfg: FilterConfig,
                  t_gap: float = 0.0) -> PointCloudFrame | None:
    """Full single-frame pipeline: gate, filter in camera frame, move to world.

    Returns None when the angular-rate gate rejects the frame.
    """
    if not angular_rate_gate(raw.camera_pose, cfg.omega_max):
        log.info("frame at t=%.3f dropped: angular rate over %.2f rad/s",
                 raw.timestamp, cfg.omega_max)
        return None
    f = distance_filter(raw, cfg.max_range)
    f = voxel_filter(f, cfg.voxel_size)
    f = outlier_filter(f, cfg.outlier_radius, cfg.outlier_min_neighbors)
    pose = ego_motion_compensate(raw.camera_pose, t_gap) if t_gap else raw.camera_pose
    return transform_to_world(f, pose)
