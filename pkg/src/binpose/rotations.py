"""Quaternion and rotation-matrix algebra on SO(3).

Conventions
-----------
- Quaternions are stored w-first: ``(w, x, y, z)`` with ``w = cos(angle / 2)``.
- Storage is canonical under the double cover: ``w >= 0``, and when ``w`` is
  zero the first nonzero of ``(x, y, z)`` is positive.
- Euler angles are intrinsic Z-Y-X (yaw, pitch, roll), i.e.
  ``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``, pitch in ``[-pi/2, pi/2]``.
- Matrices act on column vectors.

Two rotation distances are provided. :func:`geodesic_distance` is the angle of
the relative rotation and is what every report uses. :func:`pose_loss` is the
log-surrogate ``log(1 - |<a, b>| + eps)`` meant for optimisation; it is a
monotone function of the geodesic distance but is never reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import NotARotation, ZeroNorm

_ZERO_NORM = 1e-12
_SIGN_EPS = 1e-12
_MATRIX_TOL = 1e-6
DEFAULT_EPSILON = 1e-6


def _canonical(v: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(v @ v))
    if not n > _ZERO_NORM:
        raise ZeroNorm(f"quaternion norm {n!r} is too small to normalize")
    v = v / n
    if v[0] < -_SIGN_EPS:
        v = -v
    elif abs(v[0]) <= _SIGN_EPS:
        for c in v[1:]:
            if abs(c) > _SIGN_EPS:
                if c < 0:
                    v = -v
                break
        v[0] = 0.0  # a residual -1e-300 would break w >= 0
    return v


@dataclass(frozen=True)
class UnitQuaternion:
    """A rotation as a unit quaternion, always stored normalized and canonical.

    Any 4 reals with nonzero norm are accepted; the constructor rescales them.
    """

    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        v = _canonical(np.array([self.w, self.x, self.y, self.z], dtype=float))
        for name, value in zip("wxyz", v):
            object.__setattr__(self, name, float(value))

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, v: Iterable[float]) -> "UnitQuaternion":
        w, x, y, z = (float(c) for c in v)
        return cls(w, x, y, z)

    @classmethod
    def from_axis_angle(cls, axis, angle: float) -> "UnitQuaternion":
        axis = np.asarray(axis, dtype=float)
        n = np.linalg.norm(axis)
        if n <= _ZERO_NORM:
            raise ZeroNorm("rotation axis has zero length")
        s = math.sin(angle / 2.0) / n
        return cls(math.cos(angle / 2.0), axis[0] * s, axis[1] * s, axis[2] * s)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    @property
    def angle(self) -> float:
        """Rotation angle in ``[0, pi]``."""
        return geodesic_distance(self, UnitQuaternion.identity())

    def __mul__(self, other: "UnitQuaternion") -> "UnitQuaternion":
        return multiply(self, other)

    def rotate(self, points) -> np.ndarray:
        """Rotate a 3-vector or an ``(n, 3)`` array of points."""
        return np.asarray(points, dtype=float) @ to_matrix(self).T

    def __str__(self) -> str:
        return format_quaternion(self)


def normalize(q) -> UnitQuaternion:
    """Normalize a raw 4-vector ``(w, x, y, z)`` to a canonical unit quaternion."""
    return UnitQuaternion.from_array(q)


def _hamilton(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def multiply(a: UnitQuaternion, b: UnitQuaternion) -> UnitQuaternion:
    """Hamilton product ``a * b`` (apply ``b`` first, then ``a``)."""
    return UnitQuaternion.from_array(_hamilton(a.as_array(), b.as_array()))


def inverse(q: UnitQuaternion) -> UnitQuaternion:
    return UnitQuaternion(q.w, -q.x, -q.y, -q.z)


def _as_vec(q) -> np.ndarray:
    if isinstance(q, UnitQuaternion):
        return q.as_array()
    return np.asarray(q, dtype=float)


def geodesic_distance(q_pred, q_gt) -> float:
    """Angle in radians of the rotation taking ``q_gt`` to ``q_pred``.

    Equals ``2 * arccos(|<q_pred, q_gt>|)``. It is evaluated as
    ``4 * atan2(|a - b|, |a + b|)`` with ``b`` sign-aligned to ``a``, which is
    the same quantity without the loss of precision arccos suffers near zero.
    Raw 4-vectors are accepted so that ``-q`` can be passed directly.
    """
    a = _as_vec(q_pred)
    b = _as_vec(q_gt)
    if float(a @ b) < 0.0:
        b = -b
    d = a - b
    s = a + b
    return 4.0 * math.atan2(math.sqrt(float(d @ d)), math.sqrt(float(s @ s)))


def geodesic_distance_arccos(q_pred, q_gt) -> float:
    """Textbook form ``2 * arccos(clip(|<a, b>|, 0, 1))``; kept as a cross-check."""
    dot = abs(float(_as_vec(q_pred) @ _as_vec(q_gt)))
    return 2.0 * math.acos(min(1.0, dot))


def geodesic_distances(q: np.ndarray, refs: np.ndarray) -> np.ndarray:
    """Vectorised geodesic distance between one quaternion and an ``(n, 4)`` batch.

    ``q`` may also be ``(n, 4)`` for elementwise distances.
    """
    q = np.asarray(q, dtype=float)
    refs = np.asarray(refs, dtype=float)
    dot = np.sum(q * refs, axis=-1)
    sign = np.where(dot < 0.0, -1.0, 1.0)[..., None]
    b = refs * sign
    d = np.linalg.norm(q - b, axis=-1)
    s = np.linalg.norm(q + b, axis=-1)
    return 4.0 * np.arctan2(d, s)


def pose_loss(q_pred, q_gt, epsilon: float = DEFAULT_EPSILON) -> float:
    """``log(1 - |<q_pred, q_gt>| + epsilon)``, the training-style surrogate."""
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    dot = min(1.0, abs(float(_as_vec(q_pred) @ _as_vec(q_gt))))
    return math.log(1.0 - dot + epsilon)


def to_matrix(q: UnitQuaternion) -> np.ndarray:
    w, x, y, z = q.w, q.x, q.y, q.z
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def check_rotation_matrix(m, tol: float = _MATRIX_TOL) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise NotARotation(f"expected a finite 3x3 matrix, got shape {m.shape}")
    if np.max(np.abs(m.T @ m - np.eye(3))) > tol:
        raise NotARotation("matrix columns are not orthonormal")
    if abs(np.linalg.det(m) - 1.0) > tol:
        raise NotARotation("matrix determinant is not +1")
    return m


def from_matrix(m) -> UnitQuaternion:
    """Quaternion of a rotation matrix (Shepperd's branch selection)."""
    m = check_rotation_matrix(m)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    i = int(np.argmax([tr, m[0, 0], m[1, 1], m[2, 2]]))
    if i == 0:
        s = 2.0 * math.sqrt(1.0 + tr)
        v = (0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s)
    elif i == 1:
        s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
        v = ((m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s)
    elif i == 2:
        s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
        v = ((m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s)
    else:
        s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
        v = ((m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s)
    return UnitQuaternion.from_array(v)


def to_euler(q: UnitQuaternion) -> tuple[float, float, float]:
    """``(yaw, pitch, roll)`` for the intrinsic Z-Y-X convention."""
    m = to_matrix(q)
    cp = math.hypot(m[0, 0], m[1, 0])  # cos(pitch), accurate near the poles unlike 1 - |m20|
    pitch = math.atan2(-m[2, 0], cp)
    if cp > 1e-12:
        yaw = math.atan2(m[1, 0], m[0, 0])
        roll = math.atan2(m[2, 1], m[2, 2])
    else:
        # gimbal lock: only yaw - sign*roll is observable, put it all in yaw
        roll = 0.0
        yaw = math.atan2(-m[0, 1], m[1, 1])
    return yaw, pitch, roll


def from_euler(yaw: float, pitch: float, roll: float) -> UnitQuaternion:
    qz = UnitQuaternion.from_axis_angle((0, 0, 1), yaw)
    qy = UnitQuaternion.from_axis_angle((0, 1, 0), pitch)
    qx = UnitQuaternion.from_axis_angle((1, 0, 0), roll)
    return qz * qy * qx


def sample_uniform(rng: np.random.Generator) -> UnitQuaternion:
    """Haar-uniform random rotation: normalize four standard normals."""
    while True:
        v = rng.standard_normal(4)
        if v @ v > _ZERO_NORM:
            return UnitQuaternion.from_array(v)


def sample_uniform_array(rng: np.random.Generator, n: int) -> np.ndarray:
    """``(n, 4)`` canonical unit quaternions, same distribution as :func:`sample_uniform`."""
    v = rng.standard_normal((n, 4))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    v[v[:, 0] < 0] *= -1.0
    return v


def format_quaternion(q: UnitQuaternion) -> str:
    return " ".join(format(c, ".17g") for c in q.as_array())


def parse_quaternion(text: str) -> UnitQuaternion:
    parts = text.split()
    if len(parts) != 4:
        raise ValueError(f"expected 'w x y z', got {text!r}")
    return UnitQuaternion.from_array(float(p) for p in parts)
