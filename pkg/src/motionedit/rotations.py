"""Unit-quaternion algebra: products, SLERP, and axis-angle conversion.

Quaternions are stored as (w, x, y, z) float arrays.  All functions are
vectorized over leading dimensions and pure.
"""

from __future__ import annotations

import numpy as np

# Below this |dot| (after shortest-arc sign fix) SLERP falls back to nlerp.
ANTIPODAL_EPS = 1e-6

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


def normalize(q: np.ndarray) -> np.ndarray:
    """Return q scaled to unit norm; rejects (near-)zero quaternions."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-12):
        from .errors import DegenerateGeometryError

        raise DegenerateGeometryError("cannot normalize a zero-norm quaternion")
    return q / n


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b, broadcasting over leading dims."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate 3-vectors v by unit quaternions q (broadcasting)."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    qv = q[..., 1:]
    qw = q[..., 0:1]
    t = 2.0 * np.cross(qv, v)
    return v + qw * t + np.cross(qv, t)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix (…,3,3) from unit quaternion."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - w * z)
    m[..., 0, 2] = 2 * (x * z + w * y)
    m[..., 1, 0] = 2 * (x * y + w * z)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - w * x)
    m[..., 2, 0] = 2 * (x * z - w * y)
    m[..., 2, 1] = 2 * (y * z + w * x)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def axis_angle_to_quat(v: np.ndarray) -> np.ndarray:
    """Rotation-vector (axis * angle, radians) to unit quaternion.

    The zero vector maps to the identity quaternion.
    """
    v = np.asarray(v, dtype=float)
    angle = np.linalg.norm(v, axis=-1, keepdims=True)
    half = 0.5 * angle
    # sin(x)/x with a series fallback near zero keeps this smooth.
    small = angle < 1e-8
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(small, 0.5 - angle**2 / 48.0, np.sin(half) / np.where(small, 1.0, angle))
    w = np.cos(half)
    xyz = v * k
    return np.concatenate([w, xyz], axis=-1)


def quat_to_axis_angle(q: np.ndarray) -> np.ndarray:
    """Unit quaternion to rotation vector with angle in [0, pi]."""
    q = np.asarray(q, dtype=float)
    q = np.where(q[..., 0:1] < 0, -q, q)  # canonical hemisphere
    w = np.clip(q[..., 0:1], -1.0, 1.0)
    angle = 2.0 * np.arccos(w)
    s = np.sqrt(np.maximum(1.0 - w * w, 0.0))
    small = s < 1e-8
    with np.errstate(invalid="ignore", divide="ignore"):
        axis = np.where(small, 0.0, q[..., 1:] / np.where(small, 1.0, s))
    # near-identity: q_xyz ~= v/2, so v ~= 2*q_xyz
    return np.where(small, 2.0 * q[..., 1:], axis * angle)


def slerp(qa: np.ndarray, qb: np.ndarray, alpha: float) -> tuple[np.ndarray, bool]:
    """Geodesic interpolation between unit quaternions.

    Uses the shortest-arc convention (qb is negated when dot(qa, qb) < 0).
    Returns (result, degenerate) where degenerate is True when the inputs
    were near-antipodal and normalized linear interpolation was used.
    """
    qa = np.asarray(qa, dtype=float)
    qb = np.asarray(qb, dtype=float)
    dot = np.sum(qa * qb, axis=-1, keepdims=True)
    qb = np.where(dot < 0, -qb, qb)
    dot = np.abs(dot)

    degenerate_mask = dot < ANTIPODAL_EPS
    dot_c = np.clip(dot, -1.0, 1.0)
    theta = np.arccos(dot_c)
    sin_theta = np.sin(theta)
    safe = sin_theta > 1e-9
    with np.errstate(invalid="ignore", divide="ignore"):
        wa = np.where(safe, np.sin((1.0 - alpha) * theta) / np.where(safe, sin_theta, 1.0), 1.0 - alpha)
        wb = np.where(safe, np.sin(alpha * theta) / np.where(safe, sin_theta, 1.0), alpha)
    out = wa * qa + wb * qb
    out = normalize(out)
    return out, bool(np.any(degenerate_mask))


def slerp_many(qa: np.ndarray, qb: np.ndarray, alpha: float) -> np.ndarray:
    """SLERP discarding the degeneracy flag (vectorized convenience)."""
    out, _ = slerp(qa, qb, alpha)
    return out


def yaw_quat(yaw: float) -> np.ndarray:
    """Quaternion for a rotation of `yaw` radians about the y (up) axis."""
    return np.array([np.cos(yaw / 2.0), 0.0, np.sin(yaw / 2.0), 0.0])


def yaw_matrix(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
