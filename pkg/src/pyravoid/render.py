"""Synthetic depth-camera rendering by analytic ray casting.

Rays on the camera's angular grid are intersected with every scenario body;
each ray keeps its nearest hit within the sensing range (occlusion comes for
free). Optional Gaussian noise perturbs the hit range along the ray, which is
how stereo depth error behaves to first order. Output clouds are camera-frame.
"""

from __future__ import annotations

import numpy as np

from .camera import CameraModel
from .cloud_pipeline import PointCloudFrame
from .geometry import Pose
from .world import BOX, Mover, Scenario, StaticBody


def _ray_aabb(origin: np.ndarray, dirs: np.ndarray, lo: np.ndarray,
              hi: np.ndarray) -> np.ndarray:
    """Slab-method ranges for unit rays; inf where there is no forward hit."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t1 = (lo[None, :] - origin[None, :]) * inv
        t2 = (hi[None, :] - origin[None, :]) * inv
    t_near = np.nanmax(np.minimum(t1, t2), axis=1)
    t_far = np.nanmin(np.maximum(t1, t2), axis=1)
    hit = (t_far >= t_near) & (t_far > 1e-9)
    t = np.where(t_near > 1e-9, t_near, t_far)
    return np.where(hit, t, np.inf)


def _ray_ellipsoid(origin: np.ndarray, dirs: np.ndarray, center: np.ndarray,
                   semi: np.ndarray) -> np.ndarray:
    """Quadratic-form ranges for unit rays against an axis-aligned ellipsoid."""
    q = (origin - center) / semi
    e = dirs / semi[None, :]
    a = np.einsum("ij,ij->i", e, e)
    b = e @ q
    c = float(q @ q) - 1.0
    disc = b * b - a * c
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    near = (-b - sq) / a
    far = (-b + sq) / a
    t = np.where(near > 1e-9, near, far)
    return np.where(ok & (t > 1e-9), t, np.inf)


def render_cloud(scenario: Scenario, t: float, camera_pose: Pose,
                 camera: CameraModel, rng: np.random.Generator | None = None
                 ) -> PointCloudFrame:
    """Render one synthetic depth frame at simulation time t.

    Deterministic for a given (scenario, t, pose, camera, rng state); pass a
    freshly seeded generator per frame for reproducible noise.
    """
    dirs_cam = camera.ray_directions()
    dirs_world = dirs_cam @ camera_pose.rotation_matrix().T
    origin = camera_pose.translation

    n = dirs_cam.shape[0]
    best = np.full(n, np.inf)
    color_of = np.zeros((n, 3))

    def consider(ranges: np.ndarray, color: np.ndarray) -> None:
        nonlocal best, color_of
        closer = ranges < best
        best = np.where(closer, ranges, best)
        color_of[closer] = color

    for body in scenario.static_bodies:
        consider(_ray_aabb(origin, dirs_world, body.aabb.minimum,
                           body.aabb.maximum), body.color)
    for mover in scenario.movers:
        center, _ = mover.state_at(t)
        half = mover.size / 2
        if mover.shape == BOX:
            consider(_ray_aabb(origin, dirs_world, center - half, center + half),
                     mover.color)
        else:
            consider(_ray_ellipsoid(origin, dirs_world, center, half),
                     mover.color)

    hit = best <= camera.max_depth
    ranges = best[hit]
    if camera.noise_sigma > 0:
        if rng is None:
            rng = np.random.default_rng()
        ranges = ranges + rng.normal(0.0, camera.noise_sigma, size=ranges.shape)
        ranges = np.maximum(ranges, 1e-3)
    positions = dirs_cam[hit] * ranges[:, None]
    return PointCloudFrame(timestamp=float(t), positions=positions,
                           colors=color_of[hit], camera_pose=camera_pose.copy(),
                           frame="camera")
