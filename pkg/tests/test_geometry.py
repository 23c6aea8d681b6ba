import math

import numpy as np
import pytest

from graspkit import (
    EncodingError,
    GraspPose,
    PoseVector,
    RangeError,
    euler_to_rotation,
    pose_from_vector,
    pose_to_vector,
    se3_distance,
)
from _fixtures import random_pose, random_pose_vector


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


class TestEulerToRotation:
    def test_zero_angles_identity(self):
        assert np.allclose(euler_to_rotation(0, 0, 0), np.eye(3), atol=0)

    def test_quarter_turn_about_z(self):
        r = euler_to_rotation(0, 0, math.pi / 2)
        assert np.allclose(r @ np.array([1.0, 0, 0]), [0, 1, 0], atol=1e-15)

    def test_matches_primitive_composition(self):
        r = euler_to_rotation(0.3, -0.2, 1.1)
        expected = rot_z(1.1) @ rot_y(-0.2) @ rot_x(0.3)
        assert np.max(np.abs(r - expected)) < 1e-12
        assert np.max(np.abs(r.T @ r - np.eye(3))) < 1e-12

    def test_determinant_always_one(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            rx, ry, rz = rng.uniform(-math.pi, math.pi, 3)
            assert abs(np.linalg.det(euler_to_rotation(rx, ry, rz)) - 1.0) < 1e-12


class TestPoseFromVector:
    def test_all_zero_vector(self):
        g = pose_from_vector(PoseVector(0, 0, 0, 0, 0, 0, 0))
        assert np.allclose(g.rotation, np.eye(3))
        assert np.allclose(g.translation, 0)
        assert g.width == 0

    def test_translation_only(self):
        g = pose_from_vector(PoseVector(0.5, -0.5, 0.1, 0, 0, 0, 0.04))
        assert np.allclose(g.rotation, np.eye(3))
        assert np.allclose(g.translation, [0.5, -0.5, 0.1])
        assert g.width == 0.04

    @pytest.mark.parametrize(
        "field,value",
        [("rz", 3.5), ("rz", -0.1), ("x", 1.5), ("rx", -1.2), ("width", -0.01)],
    )
    def test_out_of_range_fields(self, field, value):
        kwargs = dict(x=0, y=0, z=0, rx=0, ry=0, rz=0, width=0)
        kwargs[field] = value
        with pytest.raises(RangeError):
            pose_from_vector(PoseVector(**kwargs))


class TestPoseToVector:
    def test_identity_pose(self):
        g = GraspPose(np.eye(3), np.zeros(3), 0.0)
        v = pose_to_vector(g)
        assert v.as_list() == [0, 0, 0, 0, 0, 0, 0]

    def test_round_trip_single(self):
        v = PoseVector(0, 0, 0, 0.1, -0.3, 2.0, 0)
        v2 = pose_to_vector(pose_from_vector(v))
        assert abs(v2.rx - 0.1) < 1e-9
        assert abs(v2.ry + 0.3) < 1e-9
        assert abs(v2.rz - 2.0) < 1e-9

    def test_unreachable_rotation(self):
        g = GraspPose(rot_x(math.pi), np.zeros(3), 0.0)  # rx = pi, outside [-1, 1]
        with pytest.raises(EncodingError):
            pose_to_vector(g)

    def test_round_trip_many(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            v = random_pose_vector(rng)
            g = pose_from_vector(v)
            # vector-born poses encode back bit-exactly
            assert pose_to_vector(g).as_list() == v.as_list()
            # a pose rebuilt from the bare matrix exercises the trig decoder
            fresh = GraspPose(g.rotation, g.translation, g.width)
            v2 = pose_to_vector(fresh)
            assert np.max(np.abs(v.as_array() - v2.as_array())) < 1e-9
            g2 = pose_from_vector(v2)
            assert np.linalg.norm(g.rotation - g2.rotation) < 1e-9
            assert np.array_equal(g.translation, g2.translation)

    def test_rz_boundary_pi(self):
        v = PoseVector(0, 0, 0, 0.2, 0.1, math.pi, 0)
        v2 = pose_to_vector(pose_from_vector(v))
        assert abs(v2.rz - math.pi) < 1e-9

    def test_translation_copied_verbatim(self):
        g = GraspPose(np.eye(3), np.array([2.5, 0.0, -3.0]), 0.0)
        v = pose_to_vector(g)  # out-of-bound translation still encodes
        assert (v.x, v.y, v.z) == (2.5, 0.0, -3.0)
        assert not v.in_bounds()


class TestSe3Distance:
    def test_self_distance_zero(self):
        rng = np.random.default_rng(5)
        g = random_pose(rng)
        assert se3_distance(g, g) == 0.0
        assert se3_distance(g, g, include_width=True) == 0.0

    def test_three_four_five(self):
        a = pose_from_vector(PoseVector(0, 0, 0, 0, 0, 0, 0))
        b = pose_from_vector(PoseVector(0.3, 0.4, 0, 0, 0, 0, 0))
        assert abs(se3_distance(a, b) - 0.5) < 1e-15

    def test_matches_hand_computed_norm(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            va, vb = random_pose_vector(rng), random_pose_vector(rng)
            a, b = pose_from_vector(va), pose_from_vector(vb)
            expected = math.sqrt(sum(
                (x - y) ** 2
                for x, y in zip(va.as_list()[:6], vb.as_list()[:6])
            ))
            assert abs(se3_distance(a, b) - expected) < 1e-12
            expected_w = math.sqrt(sum(
                (x - y) ** 2 for x, y in zip(va.as_list(), vb.as_list())
            ))
            assert abs(se3_distance(a, b, include_width=True) - expected_w) < 1e-12

    def test_metric_properties(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            a, b, c = (random_pose(rng) for _ in range(3))
            assert se3_distance(a, b) == se3_distance(b, a)
            assert se3_distance(a, c) <= se3_distance(a, b) + se3_distance(b, c) + 1e-12


class TestGraspPoseValidation:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(ValueError):
            GraspPose(np.eye(3) * 1.001, np.zeros(3), 0.0)

    def test_rejects_reflection(self):
        m = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValueError):
            GraspPose(m, np.zeros(3), 0.0)

    def test_rejects_negative_width(self):
        with pytest.raises(ValueError):
            GraspPose(np.eye(3), np.zeros(3), -0.1)
