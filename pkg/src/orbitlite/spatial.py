"""Batched 3D spatial math: quaternions (w, x, y, z), transforms, skew maps.

All functions broadcast over leading batch dimensions and operate in float64.
Quaternions are kept within 1e-9 of unit norm; renormalization is skipped when
the drift is below 1e-12 so that composing with the identity transform leaves
the operand bit-for-bit unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_RENORM_TOL = 1e-12


def quat_identity(shape=()) -> np.ndarray:
    q = np.zeros(tuple(shape) + (4,), dtype=np.float64)
    q[..., 0] = 1.0
    return q


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Normalize, skipping elements already unit to within 1e-12."""
    q = np.asarray(q, dtype=np.float64)
    n2 = np.sum(q * q, axis=-1, keepdims=True)
    needs = np.abs(n2 - 1.0) > _RENORM_TOL
    if not needs.any():
        return q
    out = np.where(needs, q / np.sqrt(n2), q)
    return out


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return quat_normalize(
        np.stack(
            [
                aw * bw - ax * bx - ay * by - az * bz,
                aw * bx + ax * bw + ay * bz - az * by,
                aw * by - ax * bz + ay * bw + az * bx,
                aw * bz + ax * by - ay * bx + az * bw,
            ],
            axis=-1,
        )
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return np.concatenate([q[..., :1], -q[..., 1:]], axis=-1)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v by quaternion(s) q."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = q[..., :1]
    u = q[..., 1:]
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_from_axis_angle(axis: np.ndarray, angle) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    half = 0.5 * angle
    s = np.sin(half)
    return quat_normalize(
        np.concatenate([np.cos(half)[..., None], axis * s[..., None]], axis=-1)
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix with shape (..., 3, 3)."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    m = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 0] = 1.0 - 2.0 * (yy + zz)
    m[..., 0, 1] = 2.0 * (xy - wz)
    m[..., 0, 2] = 2.0 * (xz + wy)
    m[..., 1, 0] = 2.0 * (xy + wz)
    m[..., 1, 1] = 1.0 - 2.0 * (xx + zz)
    m[..., 1, 2] = 2.0 * (yz - wx)
    m[..., 2, 0] = 2.0 * (xz - wy)
    m[..., 2, 1] = 2.0 * (yz + wx)
    m[..., 2, 2] = 1.0 - 2.0 * (xx + yy)
    return m


def axis_angle_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle), shortest path, shape (..., 3)."""
    q = np.asarray(q, dtype=np.float64)
    # force w >= 0 so the angle is in [0, pi]
    q = np.where(q[..., :1] < 0.0, -q, q)
    w = np.clip(q[..., 0], -1.0, 1.0)
    v = q[..., 1:]
    n = np.linalg.norm(v, axis=-1)
    angle = 2.0 * np.arctan2(n, w)
    small = n < 1e-12
    scale = np.where(small, 2.0, angle / np.where(small, 1.0, n))
    return v * scale[..., None]


def skew(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    m = np.zeros(v.shape[:-1] + (3, 3), dtype=np.float64)
    m[..., 0, 1] = -v[..., 2]
    m[..., 0, 2] = v[..., 1]
    m[..., 1, 0] = v[..., 2]
    m[..., 1, 2] = -v[..., 0]
    m[..., 2, 0] = -v[..., 1]
    m[..., 2, 1] = v[..., 0]
    return m


@dataclass
class Transform:
    """Rigid-body pose: position (..., 3) and unit quaternion (..., 4) as (w, x, y, z)."""

    pos: np.ndarray
    quat: np.ndarray

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=np.float64)
        self.quat = quat_normalize(np.asarray(self.quat, dtype=np.float64))

    @staticmethod
    def identity(shape=()) -> "Transform":
        return Transform(np.zeros(tuple(shape) + (3,)), quat_identity(shape))

    def compose(self, other: "Transform") -> "Transform":
        """self ∘ other: apply other in self's frame."""
        return Transform(
            self.pos + quat_rotate(self.quat, other.pos),
            quat_mul(self.quat, other.quat),
        )

    def inverse(self) -> "Transform":
        qc = quat_conj(self.quat)
        return Transform(-quat_rotate(qc, self.pos), qc)

    def apply(self, point: np.ndarray) -> np.ndarray:
        return self.pos + quat_rotate(self.quat, np.asarray(point, dtype=np.float64))

    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.quat)

    def select(self, idx) -> "Transform":
        return Transform(self.pos[idx], self.quat[idx])

    def copy(self) -> "Transform":
        return Transform(self.pos.copy(), self.quat.copy())


def pose_error(current: Transform, desired: Transform) -> np.ndarray:
    """6-vector task-space error: (p_des - p_cur, axis-angle of R_des R_curᵀ)."""
    lin = desired.pos - current.pos
    q_rel = quat_mul(desired.quat, quat_conj(current.quat))
    ang = axis_angle_from_quat(q_rel)
    return np.concatenate([lin, ang], axis=-1)
