"""Quaternion, pose, box and ellipsoid-distance primitives."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pyravoid.geometry import (AABB, Pose, euler_from_quat, mean_pose,
                               point_ellipsoid_distance, quat_conjugate,
                               quat_from_euler, quat_from_matrix,
                               quat_multiply, quat_normalize, quat_rotate,
                               quat_to_matrix)


def random_quat(rng):
    return quat_normalize(rng.normal(size=4))


# ---------------------------------------------------------------------------
# quaternions

def test_normalize_rejects_zero():
    with pytest.raises(ValueError):
        quat_normalize(np.zeros(4))


def test_multiply_identity():
    q = quat_normalize([0.3, -0.5, 0.7, 0.1])
    ident = np.array([1.0, 0, 0, 0])
    np.testing.assert_allclose(quat_multiply(ident, q), q, atol=1e-12)
    np.testing.assert_allclose(quat_multiply(q, ident), q, atol=1e-12)


def test_conjugate_inverts_rotation():
    rng = np.random.default_rng(0)
    for _ in range(50):
        q = random_quat(rng)
        v = rng.normal(size=3)
        back = quat_rotate(quat_conjugate(q), quat_rotate(q, v))
        np.testing.assert_allclose(back, v, atol=1e-12)


def test_to_matrix_is_orthonormal():
    rng = np.random.default_rng(1)
    for _ in range(50):
        m = quat_to_matrix(random_quat(rng))
        np.testing.assert_allclose(m @ m.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(m) == pytest.approx(1.0, abs=1e-12)


def test_matrix_round_trip():
    # from_matrix(to_matrix(q)) recovers q up to overall sign
    rng = np.random.default_rng(2)
    for _ in range(200):
        q = random_quat(rng)
        q2 = quat_from_matrix(quat_to_matrix(q))
        if np.dot(q, q2) < 0:
            q2 = -q2
        np.testing.assert_allclose(q2, q, atol=1e-9)


def test_matrix_round_trip_covers_all_shepperd_branches():
    # rotations by pi about each axis drive the trace negative, one branch each
    for axis in range(3):
        rpy = [0.0, 0.0, 0.0]
        rpy[axis] = np.pi
        q = quat_from_euler(*rpy)
        m = quat_to_matrix(q)
        np.testing.assert_allclose(quat_to_matrix(quat_from_matrix(m)), m,
                                   atol=1e-9)


def test_euler_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(200):
        roll = rng.uniform(-np.pi, np.pi)
        pitch = rng.uniform(-np.pi / 2 + 0.01, np.pi / 2 - 0.01)
        yaw = rng.uniform(-np.pi, np.pi)
        r, p, y = euler_from_quat(quat_from_euler(roll, pitch, yaw))
        assert r == pytest.approx(roll, abs=1e-9)
        assert p == pytest.approx(pitch, abs=1e-9)
        assert y == pytest.approx(yaw, abs=1e-9)


def test_yaw_quarter_turn_maps_x_to_y():
    q = quat_from_euler(0.0, 0.0, np.pi / 2)
    np.testing.assert_allclose(quat_rotate(q, [1.0, 0, 0]), [0, 1, 0],
                               atol=1e-12)


def test_multiply_composes_rotations():
    rng = np.random.default_rng(4)
    for _ in range(50):
        a, b = random_quat(rng), random_quat(rng)
        v = rng.normal(size=3)
        lhs = quat_rotate(quat_multiply(a, b), v)
        rhs = quat_rotate(a, quat_rotate(b, v))
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


# ---------------------------------------------------------------------------
# poses

def test_pose_identity_leaves_points():
    pts = np.array([[1.0, 2, 3], [-4, 0, 2]])
    np.testing.assert_allclose(Pose().transform_points(pts), pts, atol=1e-12)


def test_pose_pure_translation_offsets_points():
    pose = Pose(translation=[1.0, 2.0, 3.0])
    np.testing.assert_allclose(pose.transform_points([[0.0, 0, 0]]),
                               [[1, 2, 3]], atol=1e-12)


def test_pose_transform_round_trip():
    rng = np.random.default_rng(5)
    for _ in range(50):
        pose = Pose(translation=rng.normal(size=3), rotation=random_quat(rng))
        pts = rng.normal(size=(20, 3))
        back = pose.inverse_transform_points(pose.transform_points(pts))
        np.testing.assert_allclose(back, pts, atol=1e-9)


def test_mean_pose_handles_sign_flipped_quaternions():
    q = quat_from_euler(0.0, 0.0, 0.4)
    a = Pose(translation=[0.0, 0, 0], rotation=q)
    b = Pose(translation=[2.0, 0, 0], rotation=-q)   # same rotation, other sign
    m = mean_pose(a, b)
    np.testing.assert_allclose(m.translation, [1, 0, 0], atol=1e-12)
    assert abs(abs(np.dot(m.rotation, q)) - 1.0) < 1e-12


# ---------------------------------------------------------------------------
# boxes

def test_aabb_rejects_inverted_corners():
    with pytest.raises(ValueError):
        AABB([0.0, 0, 0], [-1.0, 1, 1])


def test_aabb_from_points_bounds_every_point():
    rng = np.random.default_rng(6)
    pts = rng.normal(size=(100, 3))
    box = AABB.from_points(pts)
    assert np.all(pts >= box.minimum - 1e-12)
    assert np.all(pts <= box.maximum + 1e-12)


def test_aabb_corner_count_and_volume():
    box = AABB([0.0, 0, 0], [2.0, 3.0, 4.0])
    corners = box.corners()
    assert corners.shape == (8, 3)
    assert len({tuple(c) for c in corners}) == 8
    assert box.volume() == pytest.approx(24.0)
    np.testing.assert_allclose(box.center, [1, 1.5, 2])


def test_aabb_inflated_grows_every_side():
    box = AABB([0.0, 0, 0], [1.0, 1, 1]).inflated(0.3)
    np.testing.assert_allclose(box.minimum, [-0.3] * 3)
    np.testing.assert_allclose(box.maximum, [1.3] * 3)


def test_aabb_surface_distance_against_sampled_oracle():
    # densely sample the box surface and compare the closed form to the
    # minimum over samples
    rng = np.random.default_rng(7)
    box = AABB([-1.0, -2.0, 0.0], [1.0, 0.5, 3.0])
    faces = []
    for axis in range(3):
        for val in (box.minimum[axis], box.maximum[axis]):
            pts = rng.uniform(box.minimum, box.maximum, size=(4000, 3))
            pts[:, axis] = val
            faces.append(pts)
    surface = np.vstack(faces)
    for _ in range(30):
        p = rng.uniform(-4, 5, size=3)
        d = box.surface_distance(p)
        sampled = float(np.min(np.linalg.norm(surface - p, axis=1)))
        if box.contains(p):
            assert d == 0.0
        else:
            assert d == pytest.approx(sampled, abs=5e-2)
            assert d <= sampled + 1e-12


@given(st.lists(st.floats(-10, 10), min_size=3, max_size=3),
       st.floats(0, 3))
@settings(max_examples=200, deadline=None)
def test_aabb_translate_then_inflate_commutes(shift, r):
    box = AABB([0.0, 0, 0], [1.0, 2, 3])
    d = np.array(shift)
    a = box.translated(d).inflated(r)
    b = box.inflated(r).translated(d)
    np.testing.assert_allclose(a.minimum, b.minimum, atol=1e-9)
    np.testing.assert_allclose(a.maximum, b.maximum, atol=1e-9)


# ---------------------------------------------------------------------------
# ellipsoid distance

def test_ellipsoid_distance_zero_inside():
    assert point_ellipsoid_distance([0.1, 0, 0], [0.0, 0, 0],
                                    [1.0, 2.0, 3.0]) == 0.0


def test_ellipsoid_distance_sphere_case_exact():
    # for a sphere the distance is |p - c| - r
    d = point_ellipsoid_distance([3.0, 0, 0], [0.0, 0, 0], [1.0, 1.0, 1.0])
    assert d == pytest.approx(2.0, abs=1e-9)


def test_ellipsoid_distance_axis_point_exact():
    # on a principal axis the closest point is the axis vertex
    d = point_ellipsoid_distance([5.0, 0, 0], [0.0, 0, 0], [2.0, 1.0, 0.5])
    assert d == pytest.approx(3.0, abs=1e-9)


def test_ellipsoid_distance_matches_surface_sampling():
    rng = np.random.default_rng(8)
    semi = np.array([1.5, 0.7, 2.2])
    center = np.array([0.5, -1.0, 2.0])
    # dense parametric surface sampling as the oracle
    u = rng.uniform(0, 2 * np.pi, 200000)
    v = rng.uniform(-1, 1, 200000)
    s = np.sqrt(1 - v * v)
    surface = center + semi * np.stack([s * np.cos(u), s * np.sin(u), v],
                                       axis=1)
    for _ in range(40):
        p = center + rng.uniform(-5, 5, size=3)
        d = point_ellipsoid_distance(p, center, semi)
        sampled = float(np.min(np.linalg.norm(surface - p, axis=1)))
        if d == 0.0:
            assert float(np.sum(((p - center) / semi) ** 2)) <= 1.0 + 1e-9
        else:
            # closed form is a lower bound on any sampled surface distance
            assert d <= sampled + 1e-9
            assert d == pytest.approx(sampled, abs=2e-2)


def test_ellipsoid_distance_rejects_bad_axes():
    with pytest.raises(ValueError):
        point_ellipsoid_distance([1.0, 0, 0], [0.0, 0, 0], [1.0, 0.0, 1.0])
