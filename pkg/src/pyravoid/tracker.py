"""Dynamic obstacle tracking over clustered point-cloud frames.

Tracks carry a constant-velocity Kalman filter, the cluster they last matched,
and a feature vector used to disambiguate obstacles that come near each other.
Velocity observations come from displacement of a "track point": the centroid
of the closest points inside the middle of the cluster's projected image-plane
box, which stays on the camera-facing surface and so cancels most of the
depth-direction bias a raw centroid picks up as the visible surface changes.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .cloud_pipeline import Cluster, PointCloudFrame, dbscan_cluster
from .geometry import AABB, Pose

log = logging.getLogger(__name__)

DYNAMIC = "dynamic"
STATIC = "static"
PENDING = "pending"

FEATURE_SIZE = 11


@dataclass
class TrackerConfig:
    d_t: float = 0.2                  # perception period, seconds
    d_m: float = 0.9                  # matching position gate, meters
    t_kf: float = 0.7                 # unmatched track lifetime, seconds
    v_dy: float = 0.3                 # dynamic speed threshold, m/s
    s_c: int = 3                      # consecutive static votes before demotion
    n_c: int = 12                     # points averaged into the track point
    alpha: float = 0.5                # projected-box shrink factor
    kf_dt: float = 0.2                # nominal filter step for standalone use
    dbscan_eps: float = 0.3
    dbscan_min_pts: int = 18
    q_sigma_pos: float = 0.05         # process noise, meters
    q_sigma_vel: float = 0.1          # process noise, m/s
    r_sigma_pos: float = 0.05         # observation noise, meters
    r_sigma_vel: float = 0.1          # observation noise, m/s
    p0_sigma_pos: float = 0.1         # initial position uncertainty, meters
    p0_sigma_vel: float = 1.5         # initial velocity uncertainty, m/s
    use_track_point: bool = True      # False: velocity from centroid displacement
    use_features: bool = True         # False: match on position distance only

    def q_matrix(self) -> np.ndarray:
        return np.diag([self.q_sigma_pos ** 2] * 3 + [self.q_sigma_vel ** 2] * 3)

    def r_matrix(self) -> np.ndarray:
        return np.diag([self.r_sigma_pos ** 2] * 3 + [self.r_sigma_vel ** 2] * 3)

    def p0_matrix(self) -> np.ndarray:
        return np.diag([self.p0_sigma_pos ** 2] * 3 + [self.p0_sigma_vel ** 2] * 3)


# ---------------------------------------------------------------------------
# feature vectors

def compute_feature(cluster: Cluster) -> np.ndarray:
    """11-scalar shape/appearance descriptor of a cluster.

    Layout: [point count, position variance xyz, AABB volume,
    color mean rgb, color variance rgb]. Variances are population variances.
    """
    f = np.empty(FEATURE_SIZE)
    f[0] = len(cluster)
    f[1:4] = cluster.positions.var(axis=0)
    f[4] = cluster.aabb.volume()
    f[5:8] = cluster.colors.mean(axis=0)
    f[8:11] = cluster.colors.var(axis=0)
    return f


def feature_scales(features: list[np.ndarray]) -> np.ndarray:
    """Per-component max-abs over one matching round's candidate features.

    Zero components (e.g. all variances identical at 0) scale by 1 so the
    distance stays finite.
    """
    if not features:
        return np.ones(FEATURE_SIZE)
    scales = np.abs(np.stack(features)).max(axis=0)
    scales[scales < 1e-12] = 1.0
    return scales


def feature_distance(a: np.ndarray, b: np.ndarray, scales: np.ndarray) -> float:
    """Euclidean distance between feature vectors after per-component scaling."""
    return float(np.linalg.norm((a - b) / scales))


# ---------------------------------------------------------------------------
# constant-velocity Kalman filter, state [p, v]

@dataclass
class KalmanState:
    x: np.ndarray                     # (6,) position + velocity
    p: np.ndarray                     # (6, 6) covariance
    q: np.ndarray                     # (6, 6) process noise
    r: np.ndarray                     # (6, 6) observation noise
    stamp: float                      # time the state is valid at

    @property
    def position(self) -> np.ndarray:
        return self.x[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.x[3:]


def kf_init(position: np.ndarray, velocity: np.ndarray, stamp: float,
            cfg: TrackerConfig) -> KalmanState:
    x = np.concatenate([np.asarray(position, dtype=float),
                        np.asarray(velocity, dtype=float)])
    return KalmanState(x=x, p=cfg.p0_matrix(), q=cfg.q_matrix(),
                       r=cfg.r_matrix(), stamp=stamp)


def _transition(dt: float) -> np.ndarray:
    f = np.eye(6)
    f[:3, 3:] = dt * np.eye(3)
    return f


def kf_predict(kf: KalmanState, dt: float) -> KalmanState:
    """Constant-velocity prediction; covariance grows by Q."""
    if dt < 0:
        raise ValueError("cannot predict backwards in time")
    f = _transition(dt)
    x = f @ kf.x
    p = f @ kf.p @ f.T + kf.q
    p = (p + p.T) / 2
    return KalmanState(x=x, p=p, q=kf.q, r=kf.r, stamp=kf.stamp + dt)


def kf_update(kf: KalmanState, position: np.ndarray,
              velocity: np.ndarray) -> KalmanState:
    """Fuse a full (position, velocity) observation; H is identity."""
    z = np.concatenate([np.asarray(position, dtype=float),
                        np.asarray(velocity, dtype=float)])
    if not np.all(np.isfinite(z)):
        raise ValueError("observation must be finite")
    s = kf.p + kf.r
    k = kf.p @ np.linalg.inv(s)
    x = kf.x + k @ (z - kf.x)
    p = (np.eye(6) - k) @ kf.p
    p = (p + p.T) / 2
    return KalmanState(x=x, p=p, q=kf.q, r=kf.r, stamp=kf.stamp)


# ---------------------------------------------------------------------------
# track point

def track_point(cluster: Cluster, camera_pose: Pose, alpha: float,
                n_c: int) -> np.ndarray:
    """World-frame reference point on the camera-facing middle of a cluster.

    The cluster is projected onto the image plane (perspective division), its
    projected box is shrunk about the center by alpha, and the n_c points with
    the smallest camera-frame depth inside that window are averaged. Falls
    back to the whole cluster when the window is empty.
    """
    cam = camera_pose.inverse_transform_points(cluster.positions)
    z = cam[:, 2]
    front = z > 1e-9
    if not np.any(front):
        return cluster.centroid
    uv = cam[front, :2] / z[front, None]
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    center, half = (lo + hi) / 2, (hi - lo) / 2
    inner = np.all(np.abs(uv - center) <= alpha * half + 1e-12, axis=1)
    world = cluster.positions[front]
    depth = z[front]
    if not np.any(inner):
        world_sel, depth_sel = world, depth
    else:
        world_sel, depth_sel = world[inner], depth[inner]
    take = min(n_c, len(depth_sel))
    idx = np.argsort(depth_sel, kind="stable")[:take]
    return world_sel[idx].mean(axis=0)


def estimate_velocity(tp1: np.ndarray, tp2: np.ndarray, t1: float,
                      t2: float) -> np.ndarray:
    """Finite-difference velocity between two track points."""
    if t2 <= t1:
        raise ValueError("t2 must be after t1")
    return (np.asarray(tp2, dtype=float) - np.asarray(tp1, dtype=float)) / (t2 - t1)


# ---------------------------------------------------------------------------
# tracks

@dataclass
class TrackedObstacle:
    track_id: int
    kf: KalmanState
    cluster: Cluster                  # last matched cluster
    feature: np.ndarray
    track_pt: np.ndarray
    last_matched: float               # time of last successful match
    label: str = PENDING
    static_streak: int = 0
    observed_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    class_history: deque = field(default_factory=lambda: deque(maxlen=16))
    pos_history: deque = field(default_factory=lambda: deque(maxlen=4))
    matched: bool = False             # matched in the most recent step

    @property
    def speed(self) -> float:
        # Classification speed. Net displacement over the recent history is
        # robust on flat surfaces, where single-frame estimates spike because
        # the camera-nearest points are picked by sensor noise rather than
        # geometry; young tracks fall back to the filtered estimate.
        if len(self.pos_history) >= 2:
            t0, p0 = self.pos_history[0]
            t1, p1 = self.pos_history[-1]
            if t1 - t0 > 1e-9:
                return float(np.linalg.norm(p1 - p0) / (t1 - t0))
        return float(np.linalg.norm(self.kf.velocity))


@dataclass
class ObstacleSnapshot:
    """Planner-facing view of one obstacle at a common stamp."""

    position: np.ndarray
    velocity: np.ndarray
    aabb: AABB
    dynamic: bool
    stamp: float
    track_id: int = -1

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)


@dataclass
class PerceptionOutput:
    stamp: float
    dynamic: list[ObstacleSnapshot]
    static_clusters: list[Cluster]


@dataclass
class TrackerState:
    tracks: list[TrackedObstacle] = field(default_factory=list)
    next_id: int = 0
    initialized: bool = False


@dataclass
class MatchResult:
    pairs: list[tuple[int, int]]          # (track index, cluster index)
    unmatched_tracks: list[int]
    unmatched_clusters: list[int]


def match_clusters(tracks: list[TrackedObstacle], clusters: list[Cluster],
                   cfg: TrackerConfig) -> MatchResult:
    """Greedy one-to-one association of current clusters to tracks.

    Tracks must already be predicted to the clusters' timestamp. Pairs gate on
    predicted-position distance < d_m, then claim in ascending feature
    distance (or position distance when features are disabled).
    """
    candidates = []
    cluster_feats = [compute_feature(c) for c in clusters]
    scales = feature_scales([t.feature for t in tracks] + cluster_feats)
    for ti, tr in enumerate(tracks):
        for ci, cl in enumerate(clusters):
            gap = float(np.linalg.norm(tr.kf.position - cl.centroid))
            if gap >= cfg.d_m:
                continue
            cost = feature_distance(tr.feature, cluster_feats[ci], scales) \
                if cfg.use_features else gap
            candidates.append((cost, ti, ci))
    candidates.sort(key=lambda c: (c[0], c[1], c[2]))
    used_t: set[int] = set()
    used_c: set[int] = set()
    pairs = []
    for _, ti, ci in candidates:
        if ti in used_t or ci in used_c:
            continue
        used_t.add(ti)
        used_c.add(ci)
        pairs.append((ti, ci))
    return MatchResult(
        pairs=pairs,
        unmatched_tracks=[i for i in range(len(tracks)) if i not in used_t],
        unmatched_clusters=[i for i in range(len(clusters)) if i not in used_c],
    )


def classify(track: TrackedObstacle, v_dy: float, s_c: int) -> str:
    """Label a freshly observed track from its filtered velocity estimate.

    Above-threshold speed marks it dynamic and resets the static streak; s_c
    consecutive sub-threshold observations demote it to static.
    """
    if track.speed > v_dy:
        track.static_streak = 0
        track.label = DYNAMIC
    else:
        track.static_streak += 1
        if track.static_streak >= s_c:
            track.label = STATIC
        elif track.label != DYNAMIC:
            track.label = PENDING
        # a dynamic track keeps its label until the streak completes
    track.class_history.append(track.label)
    return track.label


def prune_tracks(tracks: list[TrackedObstacle], now: float,
                 t_kf: float) -> list[TrackedObstacle]:
    """Drop tracks that have gone unmatched for longer than t_kf."""
    return [t for t in tracks if now - t.last_matched <= t_kf]


def _spawn_track(state: TrackerState, cluster: Cluster, stamp: float,
                 cfg: TrackerConfig) -> TrackedObstacle:
    tr = TrackedObstacle(
        track_id=state.next_id,
        kf=kf_init(cluster.centroid, np.zeros(3), stamp, cfg),
        cluster=cluster,
        feature=compute_feature(cluster),
        track_pt=cluster.centroid.copy(),
        last_matched=stamp,
    )
    state.next_id += 1
    state.tracks.append(tr)
    return tr


def _reference_point(cluster: Cluster, pose: Pose, cfg: TrackerConfig) -> np.ndarray:
    if cfg.use_track_point:
        return track_point(cluster, pose, cfg.alpha, cfg.n_c)
    return cluster.centroid


def perception_step(frame_t1: PointCloudFrame, frame_t2: PointCloudFrame,
                    state: TrackerState, cfg: TrackerConfig) -> PerceptionOutput:
    """One tracking round over a consecutive pair of world-frame clouds.

    The first call seeds tracks from frame_t1's clusters. Every call clusters
    frame_t2, predicts all live filters to its stamp, associates clusters to
    tracks, estimates velocities from track-point displacement, classifies,
    and updates or propagates each filter. Unmatched clusters spawn pending
    tracks; stale tracks are pruned; static demotions release their filter and
    report the raw cluster instead.
    """
    t2 = frame_t2.timestamp
    if not state.initialized:
        for cl in dbscan_cluster(frame_t1, cfg.dbscan_eps, cfg.dbscan_min_pts):
            tr = _spawn_track(state, cl, frame_t1.timestamp, cfg)
            tr.track_pt = _reference_point(cl, frame_t1.camera_pose, cfg)
        state.initialized = True

    clusters = dbscan_cluster(frame_t2, cfg.dbscan_eps, cfg.dbscan_min_pts)

    for tr in state.tracks:
        dt = t2 - tr.kf.stamp
        if dt > 0:
            tr.kf = kf_predict(tr.kf, dt)
        tr.matched = False

    if clusters and state.tracks:
        result = match_clusters(state.tracks, clusters, cfg)
    else:
        result = MatchResult([], list(range(len(state.tracks))),
                             list(range(len(clusters))))

    demoted: list[TrackedObstacle] = []
    for ti, ci in result.pairs:
        tr = state.tracks[ti]
        cl = clusters[ci]
        tp = _reference_point(cl, frame_t2.camera_pose, cfg)
        v_obs = estimate_velocity(tr.track_pt, tp, tr.last_matched, t2)
        tr.observed_velocity = v_obs
        # fuse first so the label reads the smoothed velocity, not one spike
        tr.kf = kf_update(tr.kf, cl.centroid, v_obs)
        label = classify(tr, cfg.v_dy, cfg.s_c)
        if label == STATIC:
            demoted.append(tr)
        tr.cluster = cl
        tr.feature = compute_feature(cl)
        tr.track_pt = tp
        tr.last_matched = t2
        tr.matched = True

    for tr in demoted:
        state.tracks.remove(tr)

    for ci in result.unmatched_clusters:
        tr = _spawn_track(state, clusters[ci], t2, cfg)
        tr.track_pt = _reference_point(clusters[ci], frame_t2.camera_pose, cfg)

    state.tracks = prune_tracks(state.tracks, t2, cfg.t_kf)

    dynamic = []
    for tr in state.tracks:
        if tr.label != DYNAMIC:
            continue
        box = tr.cluster.aabb
        # an out-of-view track drifts with its filter; carry the box along
        shift = tr.kf.position - tr.cluster.centroid
        dynamic.append(ObstacleSnapshot(
            position=tr.kf.position.copy(),
            velocity=tr.kf.velocity.copy(),
            aabb=box.translated(shift),
            dynamic=True,
            stamp=t2,
            track_id=tr.track_id,
        ))

    # demoted tracks' clusters are current-frame clusters, so they land here too
    dynamic_cl = {id(tr.cluster) for tr in state.tracks if tr.label == DYNAMIC}
    static_clusters = [cl for cl in clusters if id(cl) not in dynamic_cl]

    log.debug("perception t=%.2f: %d clusters, %d tracks, %d dynamic",
              t2, len(clusters), len(state.tracks), len(dynamic))
    return PerceptionOutput(stamp=t2, dynamic=dynamic,
                            static_clusters=static_clusters)
