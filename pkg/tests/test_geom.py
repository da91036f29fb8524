import math

import numpy as np
import pytest

from mapfuse import geom
from mapfuse.errors import OutOfRange
from mapfuse.geom import (
    EnuOrigin,
    GeoCoordinate,
    PoseSE3,
    Trajectory,
    enu_to_wgs84,
    interpolate_pose,
    quat_from_rotvec,
    quat_slerp,
    se3_compose,
    se3_exp,
    se3_log,
    wgs84_to_enu,
)


def random_pose(rng, max_angle=math.pi - 0.01):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(-max_angle, max_angle)
    return PoseSE3(quat_from_rotvec(axis * angle), rng.uniform(-10, 10, size=3))


class TestCompose:
    def test_identity(self):
        rng = np.random.default_rng(0)
        p = random_pose(rng)
        assert se3_compose(PoseSE3.identity(), p).almost_equal(p)
        assert se3_compose(p, PoseSE3.identity()).almost_equal(p)

    def test_inverse(self):
        rng = np.random.default_rng(1)
        p = random_pose(rng)
        assert se3_compose(p, p.inverse()).almost_equal(PoseSE3.identity(), 1e-9)

    def test_matches_dense_matrix_product(self):
        # oracle: 4x4 homogeneous matrix multiply
        rng = np.random.default_rng(2)
        for _ in range(20):
            a, b = random_pose(rng), random_pose(rng)
            expected = a.matrix() @ b.matrix()
            got = se3_compose(a, b).matrix()
            np.testing.assert_allclose(got, expected, atol=1e-9)

    def test_quaternion_stays_normalized(self):
        rng = np.random.default_rng(3)
        p = random_pose(rng)
        for _ in range(500):
            p = p.compose(random_pose(rng))
            assert abs(np.linalg.norm(p.q) - 1.0) <= 1e-9
            assert p.q[0] >= 0.0


class TestLogExp:
    def test_identity_is_zero(self):
        np.testing.assert_array_equal(se3_log(PoseSE3.identity()), np.zeros(6))

    def test_pure_translation(self):
        p = PoseSE3(t=[1.0, 2.0, 3.0])
        np.testing.assert_allclose(se3_log(p), [0, 0, 0, 1, 2, 3], atol=1e-12)

    def test_against_matrix_logarithm_oracle(self):
        # oracle: dense matrix log of the rotation block via eigendecomposition
        p = PoseSE3(quat_from_rotvec([0, 0, math.pi / 2]), [0.4, -0.2, 1.0])
        xi = se3_log(p)
        w, v = np.linalg.eig(p.rotation)
        logr = (v @ np.diag(np.log(w)) @ np.linalg.inv(v)).real
        expected_theta = np.array([logr[2, 1], logr[0, 2], logr[1, 0]])
        np.testing.assert_allclose(xi[:3], expected_theta, atol=1e-9)

    def test_roundtrip_random_poses(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            p = random_pose(rng)
            q = se3_exp(se3_log(p))
            assert p.almost_equal(q, 1e-8)


class TestEnu:
    ORIGIN = EnuOrigin(GeoCoordinate(0.0, 115.85, 12.0))

    def test_origin_maps_to_zero(self):
        np.testing.assert_allclose(
            wgs84_to_enu(self.ORIGIN.origin, self.ORIGIN), np.zeros(3), atol=1e-9
        )

    def test_north_step_at_equator(self):
        # oracle: meridian arc length for 0.001 deg at the equator is
        # pi/180 * 1e-3 * a(1-e^2)/(1-e^2 sin^2)^(3/2) = 110.574 m
        g = GeoCoordinate(0.001, 115.85, 12.0)
        enu = wgs84_to_enu(g, self.ORIGIN)
        assert abs(enu[1] - 110.57) < 0.2
        assert abs(enu[0]) < 1e-6
        assert abs(enu[2]) < 0.01

    def test_altitude_axis(self):
        g = GeoCoordinate(0.0, 115.85, 22.0)
        enu = wgs84_to_enu(g, self.ORIGIN)
        np.testing.assert_allclose(enu, [0, 0, 10.0], atol=1e-6)

    def test_roundtrip_within_10km(self):
        origin = EnuOrigin(GeoCoordinate(-31.95, 115.86, 20.0))
        rng = np.random.default_rng(11)
        for _ in range(50):
            enu = rng.uniform(-10000, 10000, size=3)
            enu[2] = rng.uniform(-100, 100)
            back = origin.to_enu(enu_to_wgs84(enu, origin))
            assert np.linalg.norm(back - enu) <= 1e-3


class TestInterpolatePose:
    def make_traj(self):
        return Trajectory(
            [0.0, 1.0, 2.0],
            [
                PoseSE3(t=[0, 0, 0]),
                PoseSE3(t=[2, 0, 0]),
                PoseSE3(quat_from_rotvec([0, 0, math.pi / 2]), [2, 2, 0]),
            ],
        )

    def test_exact_sample(self):
        traj = self.make_traj()
        assert interpolate_pose(traj, 1.0).almost_equal(traj.poses[1])

    def test_midpoint_translation(self):
        traj = self.make_traj()
        p = interpolate_pose(traj, 0.5)
        np.testing.assert_allclose(p.t, [1, 0, 0], atol=1e-12)

    def test_midpoint_rotation_slerp(self):
        # oracle: slerp closed form, half of a 90 deg z-rotation is 45 deg
        traj = self.make_traj()
        p = interpolate_pose(traj, 1.5)
        expected = quat_from_rotvec([0, 0, math.pi / 4])
        assert min(
            np.abs(p.q - expected).max(), np.abs(p.q + expected).max()
        ) <= 1e-9

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            interpolate_pose(self.make_traj(), 2.5)


def test_slerp_matches_closed_form():
    a = quat_from_rotvec([0, 0, 0.0])
    b = quat_from_rotvec([0, 0, math.pi / 2])
    for u in np.linspace(0, 1, 11):
        got = quat_slerp(a, b, u)
        expected = quat_from_rotvec([0, 0, u * math.pi / 2])
        assert min(np.abs(got - expected).max(), np.abs(got + expected).max()) < 1e-12


def test_rotvec_roundtrip():
    rng = np.random.default_rng(5)
    for _ in range(200):
        v = rng.normal(size=3)
        v *= rng.uniform(0, math.pi - 0.05) / np.linalg.norm(v)
        np.testing.assert_allclose(
            geom.quat_to_rotvec(geom.quat_from_rotvec(v)), v, atol=1e-10
        )
