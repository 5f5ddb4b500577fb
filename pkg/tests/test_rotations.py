"""Quaternion algebra against scipy's Rotation as an independent oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation, Slerp

import motionedit.rotations as rot


def to_scipy(q):
    # scipy uses (x, y, z, w)
    q = np.asarray(q)
    return Rotation.from_quat(np.concatenate([q[..., 1:], q[..., :1]], axis=-1))


def random_unit_quats(n, seed):
    r = np.random.default_rng(seed)
    q = r.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


class TestAlgebra:
    def test_mul_matches_scipy(self):
        a = random_unit_quats(50, 0)
        b = random_unit_quats(50, 1)
        ours = rot.quat_mul(a, b)
        theirs = (to_scipy(a) * to_scipy(b)).as_matrix()
        np.testing.assert_allclose(rot.quat_to_matrix(ours), theirs, atol=1e-12)

    def test_rotate_matches_matrix(self):
        q = random_unit_quats(50, 2)
        v = np.random.default_rng(3).standard_normal((50, 3))
        np.testing.assert_allclose(
            rot.quat_rotate(q, v),
            np.einsum("nij,nj->ni", rot.quat_to_matrix(q), v),
            atol=1e-12,
        )

    def test_conjugate_inverts(self):
        q = random_unit_quats(20, 4)
        ident = rot.quat_mul(q, rot.quat_conj(q))
        np.testing.assert_allclose(np.abs(ident[:, 0]), 1.0, atol=1e-12)
        np.testing.assert_allclose(ident[:, 1:], 0.0, atol=1e-12)

    def test_axis_angle_round_trip(self):
        v = np.random.default_rng(5).standard_normal((100, 3))
        q = rot.axis_angle_to_quat(v)
        back = rot.quat_to_axis_angle(q)
        # canonical hemisphere: compare rotations, not raw vectors
        np.testing.assert_allclose(
            rot.quat_to_matrix(rot.axis_angle_to_quat(back)),
            rot.quat_to_matrix(q),
            atol=1e-10,
        )

    def test_axis_angle_small_angle_series(self):
        v = np.array([[1e-12, 0.0, 0.0], [0.0, 0.0, 0.0]])
        q = rot.axis_angle_to_quat(v)
        assert np.isfinite(q).all()
        np.testing.assert_allclose(np.linalg.norm(q, axis=-1), 1.0, atol=1e-15)

    def test_matches_scipy_rotvec(self):
        v = np.random.default_rng(6).standard_normal((50, 3))
        np.testing.assert_allclose(
            rot.quat_to_matrix(rot.axis_angle_to_quat(v)),
            Rotation.from_rotvec(v).as_matrix(),
            atol=1e-12,
        )

    def test_yaw_matrix_convention(self):
        # yaw rotates +z toward +x for positive angles (y-up, right-handed)
        m = rot.yaw_matrix(np.pi / 2)
        np.testing.assert_allclose(m @ np.array([0.0, 0.0, 1.0]), [1.0, 0.0, 0.0], atol=1e-12)
        q = rot.yaw_quat(np.pi / 2)
        np.testing.assert_allclose(rot.quat_to_matrix(q), m, atol=1e-12)


class TestSlerp:
    def test_matches_scipy_slerp(self):
        q = random_unit_quats(2, 7)
        for u in np.linspace(0.0, 1.0, 11):
            ours, degenerate = rot.slerp(q[0], q[1], u)
            assert not degenerate
            sl = Slerp([0.0, 1.0], to_scipy(q))
            np.testing.assert_allclose(
                rot.quat_to_matrix(ours), sl([u]).as_matrix()[0], atol=1e-9)

    def test_endpoints_exact(self):
        q = random_unit_quats(2, 8)
        a, _ = rot.slerp(q[0], q[1], 0.0)
        b, _ = rot.slerp(q[0], q[1], 1.0)
        np.testing.assert_allclose(rot.quat_to_matrix(a), rot.quat_to_matrix(q[0]), atol=1e-12)
        np.testing.assert_allclose(rot.quat_to_matrix(b), rot.quat_to_matrix(q[1]), atol=1e-12)

    def test_constant_angular_velocity(self):
        q = random_unit_quats(2, 9)
        prev = None
        for u in np.linspace(0.0, 1.0, 9):
            cur, _ = rot.slerp(q[0], q[1], u)
            if prev is not None:
                d = rot.quat_mul(rot.quat_conj(prev), cur)
                angle = 2 * np.arccos(np.clip(abs(d[0]), -1, 1))
                angles.append(angle)
            else:
                angles = []
            prev = cur
        np.testing.assert_allclose(angles, angles[0], atol=1e-9)

    def test_shortest_arc(self):
        q0 = np.array([1.0, 0.0, 0.0, 0.0])
        q1 = -rot.axis_angle_to_quat(np.array([0.2, 0.0, 0.0]))  # negated: same rotation
        mid, _ = rot.slerp(q0, q1, 0.5)
        expected = rot.axis_angle_to_quat(np.array([0.1, 0.0, 0.0]))
        np.testing.assert_allclose(rot.quat_to_matrix(mid), rot.quat_to_matrix(expected), atol=1e-12)

    def test_antipodal_degenerate_flag(self):
        q0 = np.array([1.0, 0.0, 0.0, 0.0])
        q1 = np.array([0.0, 1.0, 0.0, 0.0])  # angle pi: |dot| = 0 is fine
        _, degenerate = rot.slerp(q0, q1, 0.5)
        assert degenerate  # pi rotation has no unique geodesic midpoint

    def test_slerp_many_matches_single(self):
        a = random_unit_quats(10, 10)
        b = random_unit_quats(10, 11)
        many = rot.slerp_many(a, b, 0.3)
        for i in range(10):
            single, _ = rot.slerp(a[i], b[i], 0.3)
            np.testing.assert_allclose(
                rot.quat_to_matrix(many[i]), rot.quat_to_matrix(single), atol=1e-12)

    @given(st.integers(min_value=0, max_value=10_000), st.floats(min_value=0.0, max_value=1.0))
    @settings(max_examples=50, deadline=None)
    def test_result_is_unit(self, seed, u):
        q = random_unit_quats(2, seed)
        out, _ = rot.slerp(q[0], q[1], u)
        assert abs(np.linalg.norm(out) - 1.0) < 1e-9


def test_normalize_rejects_zero():
    with pytest.raises(Exception):
        rot.normalize(np.zeros(4))
