"""Depth camera model: frame convention, frustum tests, ray grid.

Camera frame: X right, Y down, Z forward (optical axis). A point is inside
the frustum when it is in front of the camera, within the max sensing range,
and its azimuth/elevation from the optical axis fit the field of view:

    z > 0,  |atan2(x, z)| <= h_fov/2,  |atan2(y, z)| <= v_fov/2,  |p| <= max_depth

Both angle tests and the range test are inclusive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Pose


@dataclass
class CameraModel:
    h_fov: float = np.deg2rad(85.2)     # horizontal field of view, radians
    v_fov: float = np.deg2rad(58.0)     # vertical field of view, radians
    max_depth: float = 8.0              # max sensing range, meters
    rays_horizontal: int = 192          # angular grid resolution for rendering
    rays_vertical: int = 108
    noise_sigma: float = 0.0            # Gaussian sigma on ray range, meters

    def contains_camera_frame(self, pts: np.ndarray) -> np.ndarray:
        """Frustum membership for points already in the camera frame.

        Parameters
        ----------
        pts : (N, 3) array
        Returns
        -------
        (N,) boolean mask
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        ok = z > 0
        ok &= np.abs(np.arctan2(x, z)) <= self.h_fov / 2 + 1e-12
        ok &= np.abs(np.arctan2(y, z)) <= self.v_fov / 2 + 1e-12
        ok &= np.linalg.norm(pts, axis=1) <= self.max_depth + 1e-12
        return ok

    def contains_world(self, pts_world: np.ndarray, pose: Pose) -> np.ndarray:
        """Frustum membership for world points given the camera pose."""
        pts_world = np.atleast_2d(np.asarray(pts_world, dtype=float))
        return self.contains_camera_frame(pose.inverse_transform_points(pts_world))

    def ray_directions(self) -> np.ndarray:
        """Unit ray directions on the angular grid, camera frame.

        Shape (rays_vertical * rays_horizontal, 3). Azimuth sweeps fastest.
        """
        az = np.linspace(-self.h_fov / 2, self.h_fov / 2, self.rays_horizontal)
        el = np.linspace(-self.v_fov / 2, self.v_fov / 2, self.rays_vertical)
        ta, te = np.meshgrid(np.tan(az), np.tan(el))
        d = np.stack([ta.ravel(), te.ravel(), np.ones(ta.size)], axis=1)
        return d / np.linalg.norm(d, axis=1, keepdims=True)
