"""Quaternion, pose and axis-aligned box primitives shared by the whole stack.

Quaternions are stored as (w, x, y, z) numpy arrays and kept unit-length.
World frame is Z-up; the camera frame convention (X right, Y down, Z forward)
lives in :mod:`pyravoid.camera`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("cannot normalize a zero quaternion")
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Shepperd's method; stable for all rotation matrices."""
    m = np.asarray(m, dtype=float)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array([(m[2, 1] - m[1, 2]) / s,
                      0.25 * s,
                      (m[0, 1] + m[1, 0]) / s,
                      (m[0, 2] + m[2, 0]) / s])
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array([(m[0, 2] - m[2, 0]) / s,
                      (m[0, 1] + m[1, 0]) / s,
                      0.25 * s,
                      (m[1, 2] + m[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array([(m[1, 0] - m[0, 1]) / s,
                      (m[0, 2] + m[2, 0]) / s,
                      (m[1, 2] + m[2, 1]) / s,
                      0.25 * s])
    return quat_normalize(q)


def quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Intrinsic Z-Y-X (yaw, pitch, roll) to quaternion."""
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    return np.array([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ])


def euler_from_quat(q: np.ndarray) -> tuple[float, float, float]:
    """Inverse of :func:`quat_from_euler`; returns (roll, pitch, yaw)."""
    w, x, y, z = quat_normalize(q)
    roll = np.arctan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    s = 2 * (w * y - z * x)
    pitch = np.arcsin(np.clip(s, -1.0, 1.0))
    yaw = np.arctan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return float(roll), float(pitch), float(yaw)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vectors v (shape (3,) or (N, 3)) by quaternion q."""
    return np.asarray(v, dtype=float) @ quat_to_matrix(q).T


@dataclass
class Pose:
    """Rigid transform of a sensor/body frame into world, plus its rates.

    ``translation`` and ``rotation`` map body coordinates into world:
    ``p_world = R(rotation) @ p_body + translation``.
    """

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: IDENTITY_QUAT.copy())
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))
    angular_acceleration: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        self.translation = np.asarray(self.translation, dtype=float)
        self.rotation = quat_normalize(self.rotation)
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.angular_velocity = np.asarray(self.angular_velocity, dtype=float)
        self.acceleration = np.asarray(self.acceleration, dtype=float)
        self.angular_acceleration = np.asarray(self.angular_acceleration, dtype=float)

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def transform_points(self, pts: np.ndarray) -> np.ndarray:
        """Body frame -> world frame."""
        return np.asarray(pts, dtype=float) @ self.rotation_matrix().T + self.translation

    def inverse_transform_points(self, pts: np.ndarray) -> np.ndarray:
        """World frame -> body frame."""
        return (np.asarray(pts, dtype=float) - self.translation) @ self.rotation_matrix()

    def copy(self) -> "Pose":
        return Pose(self.translation.copy(), self.rotation.copy(),
                    self.velocity.copy(), self.angular_velocity.copy(),
                    self.acceleration.copy(), self.angular_acceleration.copy())


def mean_pose(a: Pose, b: Pose) -> Pose:
    """Component-wise mean of two poses; quaternions are sign-aligned first."""
    qb = b.rotation if float(np.dot(a.rotation, b.rotation)) >= 0 else -b.rotation
    return Pose(
        translation=(a.translation + b.translation) / 2,
        rotation=quat_normalize(a.rotation + qb),
        velocity=(a.velocity + b.velocity) / 2,
        angular_velocity=(a.angular_velocity + b.angular_velocity) / 2,
        acceleration=(a.acceleration + b.acceleration) / 2,
        angular_acceleration=(a.angular_acceleration + b.angular_acceleration) / 2,
    )


@dataclass
class AABB:
    """Axis-aligned box given by min/max corners (world frame)."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self) -> None:
        self.minimum = np.asarray(self.minimum, dtype=float)
        self.maximum = np.asarray(self.maximum, dtype=float)
        if np.any(self.maximum < self.minimum):
            raise ValueError("AABB max corner below min corner")

    @classmethod
    def from_points(cls, pts: np.ndarray) -> "AABB":
        pts = np.asarray(pts, dtype=float)
        if pts.size == 0:
            raise ValueError("cannot bound an empty point set")
        return cls(pts.min(axis=0), pts.max(axis=0))

    @property
    def center(self) -> np.ndarray:
        return (self.minimum + self.maximum) / 2

    @property
    def extents(self) -> np.ndarray:
        return self.maximum - self.minimum

    def volume(self) -> float:
        return float(np.prod(self.extents))

    def corners(self) -> np.ndarray:
        """All 8 corners, shape (8, 3), in a fixed deterministic order."""
        lo, hi = self.minimum, self.maximum
        return np.array([[x, y, z] for x in (lo[0], hi[0])
                         for y in (lo[1], hi[1])
                         for z in (lo[2], hi[2])])

    def inflated(self, r: float) -> "AABB":
        return AABB(self.minimum - r, self.maximum + r)

    def translated(self, d: np.ndarray) -> "AABB":
        d = np.asarray(d, dtype=float)
        return AABB(self.minimum + d, self.maximum + d)

    def contains(self, p: np.ndarray) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.minimum) and np.all(p <= self.maximum))

    def surface_distance(self, p: np.ndarray) -> float:
        """Euclidean distance from point to the box surface; 0 if inside."""
        p = np.asarray(p, dtype=float)
        d = np.maximum(np.maximum(self.minimum - p, p - self.maximum), 0.0)
        return float(np.linalg.norm(d))


def point_ellipsoid_distance(p: np.ndarray, center: np.ndarray,
                             semi_axes: np.ndarray) -> float:
    """Distance from a point to an axis-aligned ellipsoid surface; 0 if inside.

    Solves the Lagrange root equation sum((a_i p_i / (t + a_i^2))^2) = 1 by
    bisection, which is robust for all exterior points.
    """
    p = np.asarray(p, dtype=float)
    a = np.asarray(semi_axes, dtype=float)
    if np.any(a <= 0):
        raise ValueError("ellipsoid semi-axes must be positive")
    q = p - np.asarray(center, dtype=float)
    if float(np.sum((q / a) ** 2)) <= 1.0:
        return 0.0

    def f(t: float) -> float:
        return float(np.sum((a * q / (t + a * a)) ** 2)) - 1.0

    lo = 0.0
    hi = float(np.linalg.norm(a * q))  # f(hi) <= 0 since each term <= (q_i/|a*q|)^2 * a_i^2
    while f(hi) > 0:
        hi *= 2
    for _ in range(200):
        mid = (lo + hi) / 2
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13 * max(1.0, hi):
            break
    t = (lo + hi) / 2
    x = a * a * q / (t + a * a)  # closest surface point, relative to center
    return float(np.linalg.norm(q - x))
