import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from binpose import rotations as rot
from binpose.errors import NotARotation, ZeroNorm
from binpose.rotations import UnitQuaternion

from strategies import quaternions, raw_quaternions, seeds

Z90 = UnitQuaternion.from_axis_angle((0, 0, 1), math.pi / 2)


def _arr(q):
    return np.asarray(q.as_array())


# normalize

@pytest.mark.parametrize("raw, expected", [
    ((2, 0, 0, 0), (1, 0, 0, 0)),
    ((-1, 0, 0, 0), (1, 0, 0, 0)),
    ((1, 1, 1, 1), (0.5, 0.5, 0.5, 0.5)),
    ((0, -1, 0, 0), (0, 1, 0, 0)),
    ((0, 0, -3, 4), (0, 0, 0.6, -0.8)),
])
def test_normalize_examples(raw, expected):
    np.testing.assert_allclose(_arr(rot.normalize(raw)), expected, atol=1e-15)


def test_normalize_rejects_zero():
    with pytest.raises(ZeroNorm):
        rot.normalize((0, 0, 0, 0))
    with pytest.raises(ZeroNorm):
        rot.normalize((1e-13, 0, 0, 0))


@given(raw_quaternions)
def test_normalize_is_unit_and_canonical(raw):
    v = _arr(rot.normalize(raw))
    assert abs(np.linalg.norm(v) - 1.0) < 1e-9
    assert v[0] >= 0
    if abs(v[0]) <= 1e-12:
        first = next(c for c in v[1:] if abs(c) > 1e-12)
        assert first > 0


@given(raw_quaternions)
def test_sign_flip_gives_same_storage(raw):
    a = rot.normalize(raw)
    b = rot.normalize(tuple(-c for c in raw))
    np.testing.assert_allclose(_arr(a), _arr(b), atol=1e-15)


# multiply / inverse

def test_multiply_identity_and_angle_addition():
    q = UnitQuaternion.from_axis_angle((1, 2, 3), 0.7)
    assert rot.multiply(UnitQuaternion.identity(), q) == q
    np.testing.assert_allclose(_arr(rot.multiply(Z90, Z90)), (0, 0, 0, 1), atol=1e-15)


@given(quaternions, quaternions)
def test_multiply_matches_matrix_product(a, b):
    oracle = rot.to_matrix(a) @ rot.to_matrix(b)
    assert np.abs(rot.to_matrix(rot.multiply(a, b)) - oracle).max() < 1e-12


def test_inverse_examples():
    assert rot.inverse(UnitQuaternion.identity()) == UnitQuaternion.identity()
    expected = UnitQuaternion.from_axis_angle((0, 0, 1), -math.pi / 2)
    np.testing.assert_allclose(_arr(rot.inverse(Z90)), _arr(expected), atol=1e-15)


@given(quaternions)
def test_inverse_cancels(q):
    assert rot.geodesic_distance(rot.multiply(q, rot.inverse(q)), UnitQuaternion.identity()) < 1e-9


# geodesic distance

def test_geodesic_examples():
    q = UnitQuaternion.from_axis_angle((0, 1, 1), 1.1)
    assert rot.geodesic_distance(q, q) == 0.0
    assert rot.geodesic_distance(-_arr(q), q) == 0.0
    assert abs(rot.geodesic_distance(UnitQuaternion.identity(), Z90) - math.pi / 2) < 1e-12


@given(quaternions, quaternions)
def test_geodesic_matches_arccos_form(a, b):
    d = rot.geodesic_distance(a, b)
    assert 0.0 <= d <= math.pi + 1e-12
    assert abs(d - rot.geodesic_distance_arccos(a, b)) < 1e-7


@given(quaternions, quaternions)
def test_geodesic_is_relative_rotation_angle(a, b):
    # independent oracle: angle of R_a^T R_b from the matrix trace
    m = rot.to_matrix(a).T @ rot.to_matrix(b)
    angle = math.acos(max(-1.0, min(1.0, (np.trace(m) - 1.0) / 2.0)))
    assert abs(rot.geodesic_distance(a, b) - angle) < 1e-6


@given(quaternions, quaternions, quaternions)
def test_metric_axioms(a, b, c):
    ab = rot.geodesic_distance(a, b)
    assert ab == rot.geodesic_distance(b, a)
    assert rot.geodesic_distance(a, c) <= ab + rot.geodesic_distance(b, c) + 1e-9


@given(quaternions, quaternions, quaternions)
def test_left_invariance(r, a, b):
    lhs = rot.geodesic_distance(rot.multiply(r, a), rot.multiply(r, b))
    assert abs(lhs - rot.geodesic_distance(a, b)) < 1e-9


@given(quaternions, st.lists(quaternions, min_size=1, max_size=8))
def test_batch_geodesic_matches_scalar(q, refs):
    batch = rot.geodesic_distances(_arr(q), np.array([_arr(r) for r in refs]))
    for d, r in zip(batch, refs):
        assert abs(d - rot.geodesic_distance(q, r)) < 1e-12


# loss

def test_loss_examples():
    q = UnitQuaternion.from_axis_angle((1, 0, 0), 0.4)
    assert abs(rot.pose_loss(q, q, 1e-6) - math.log(1e-6)) < 1e-9
    z180 = UnitQuaternion.from_axis_angle((0, 0, 1), math.pi)
    assert abs(rot.pose_loss(UnitQuaternion.identity(), z180, 1e-6) - math.log1p(1e-6)) < 1e-15
    with pytest.raises(ValueError):
        rot.pose_loss(q, q, 0.0)


@given(quaternions, quaternions, quaternions)
def test_loss_orders_like_geodesic(gt, a, b):
    da, db = rot.geodesic_distance(a, gt), rot.geodesic_distance(b, gt)
    la, lb = rot.pose_loss(a, gt), rot.pose_loss(b, gt)
    if da < db - 1e-6:
        assert la < lb
    elif db < da - 1e-6:
        assert lb < la


# conversions

def test_matrix_examples():
    np.testing.assert_array_equal(rot.to_matrix(UnitQuaternion.identity()), np.eye(3))
    np.testing.assert_allclose(rot.to_matrix(Z90), [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)


@given(quaternions)
def test_matrix_round_trip(q):
    m = rot.to_matrix(q)
    assert np.abs(m.T @ m - np.eye(3)).max() < 1e-9
    assert abs(np.linalg.det(m) - 1.0) < 1e-9
    assert rot.geodesic_distance(rot.from_matrix(m), q) < 1e-9


@pytest.mark.parametrize("m", [
    np.diag([1.0, 1.0, -1.0]),
    np.eye(3) * 1.01,
    np.ones((3, 3)),
    np.eye(4),
    np.full((3, 3), np.nan),
])
def test_from_matrix_rejects_non_rotations(m):
    with pytest.raises(NotARotation):
        rot.from_matrix(m)


@given(quaternions)
def test_euler_round_trip(q):
    yaw, pitch, roll = rot.to_euler(q)
    assert -math.pi / 2 <= pitch <= math.pi / 2
    assert rot.geodesic_distance(rot.from_euler(yaw, pitch, roll), q) < 1e-7


def test_euler_convention_is_intrinsic_zyx():
    yaw, pitch, roll = 0.3, -0.2, 1.1
    c, s = math.cos, math.sin
    rz = np.array([[c(yaw), -s(yaw), 0], [s(yaw), c(yaw), 0], [0, 0, 1]])
    ry = np.array([[c(pitch), 0, s(pitch)], [0, 1, 0], [-s(pitch), 0, c(pitch)]])
    rx = np.array([[1, 0, 0], [0, c(roll), -s(roll)], [0, s(roll), c(roll)]])
    np.testing.assert_allclose(rot.to_matrix(rot.from_euler(yaw, pitch, roll)), rz @ ry @ rx, atol=1e-14)


def test_euler_gimbal_lock_round_trip():
    q = rot.from_euler(0.4, math.pi / 2, 0.0)
    yaw, pitch, roll = rot.to_euler(q)
    assert rot.geodesic_distance(rot.from_euler(yaw, pitch, roll), q) < 1e-7


@given(quaternions)
def test_text_round_trip(q):
    back = rot.parse_quaternion(rot.format_quaternion(q))
    np.testing.assert_allclose(_arr(back), _arr(q), rtol=0, atol=1e-15)


def test_parse_rejects_wrong_arity():
    with pytest.raises(ValueError):
        rot.parse_quaternion("1 0 0")


# sampling

@given(seeds)
@settings(max_examples=20)
def test_sampling_is_seeded(seed):
    a = rot.sample_uniform(np.random.default_rng(seed))
    b = rot.sample_uniform(np.random.default_rng(seed))
    assert a == b


def test_uniform_angle_statistics():
    density = lambda t: (1.0 - math.cos(t)) / math.pi
    mean_oracle = integrate.quad(lambda t: t * density(t), 0, math.pi)[0]
    below_oracle = integrate.quad(density, 0, math.pi / 2)[0]
    assert abs(integrate.quad(density, 0, math.pi)[0] - 1.0) < 1e-12
    assert abs(mean_oracle - (math.pi / 2 + 2 / math.pi)) < 1e-12
    assert abs(below_oracle - (math.pi / 2 - 1) / math.pi) < 1e-12

    q = rot.sample_uniform_array(np.random.default_rng(2024), 100_000)
    angles = rot.geodesic_distances(np.array([1.0, 0, 0, 0]), q)
    assert abs(angles.mean() - mean_oracle) < 0.02
    assert abs(np.mean(angles < math.pi / 2) - below_oracle) < 0.005


def test_sample_array_matches_scalar_distribution_shape():
    q = rot.sample_uniform_array(np.random.default_rng(1), 1000)
    np.testing.assert_allclose(np.linalg.norm(q, axis=1), 1.0, atol=1e-12)
    assert np.all(q[:, 0] >= 0)
