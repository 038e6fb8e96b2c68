"""Rotation algebra on SO(3).

Rotations are plain ``(..., 3, 3)`` float arrays and quaternions are
``(..., 4)`` arrays ordered ``(w, x, y, z)`` with the canonical sign
``w >= 0``. All angles are radians.
"""

from __future__ import annotations

import numpy as np

SINGULAR_TOL = 1e-12


class DegenerateMatrix(ValueError):
    """Raised when a matrix is too close to rank deficient to project."""


def as_rotation(m) -> np.ndarray:
    r = np.asarray(m, dtype=float)
    if r.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., 3, 3) rotation array, got {r.shape}")
    return r


def is_rotation(m, tol: float = 1e-9) -> bool:
    r = np.asarray(m, dtype=float)
    if r.shape[-2:] != (3, 3) or not np.all(np.isfinite(r)):
        return False
    eye = np.broadcast_to(np.eye(3), r.shape)
    ortho = np.abs(np.swapaxes(r, -1, -2) @ r - eye).max(initial=0.0) <= tol
    return bool(ortho and np.all(np.abs(np.linalg.det(r) - 1.0) <= tol))


def canonical_quat(q) -> np.ndarray:
    """Normalize ``q`` and flip its sign so that ``w >= 0``."""
    q = np.array(q, dtype=float)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < SINGULAR_TOL):
        raise ValueError("quaternion with zero norm")
    q = q / norm
    sign = np.where(q[..., :1] < 0.0, -1.0, 1.0)
    return q * sign


def quat_to_matrix(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    out = np.empty(q.shape[:-1] + (3, 3))
    out[..., 0, 0] = 1 - 2 * (y * y + z * z)
    out[..., 0, 1] = 2 * (x * y - w * z)
    out[..., 0, 2] = 2 * (x * z + w * y)
    out[..., 1, 0] = 2 * (x * y + w * z)
    out[..., 1, 1] = 1 - 2 * (x * x + z * z)
    out[..., 1, 2] = 2 * (y * z - w * x)
    out[..., 2, 0] = 2 * (x * z - w * y)
    out[..., 2, 1] = 2 * (y * z + w * x)
    out[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def matrix_to_quat(r) -> np.ndarray:
    """Convert rotation matrices to canonical quaternions.

    Uses the largest-diagonal branch (Shepperd) per element so that the
    square root is always taken of a value >= 1.
    """
    r = as_rotation(r)
    shape = r.shape[:-2]
    m = r.reshape(-1, 3, 3)
    m00, m01, m02 = m[:, 0, 0], m[:, 0, 1], m[:, 0, 2]
    m10, m11, m12 = m[:, 1, 0], m[:, 1, 1], m[:, 1, 2]
    m20, m21, m22 = m[:, 2, 0], m[:, 2, 1], m[:, 2, 2]
    tr = m00 + m11 + m22
    branch = np.argmax(np.stack([tr, m00, m11, m22], axis=1), axis=1)
    out = np.empty((m.shape[0], 4))
    with np.errstate(invalid="ignore", divide="ignore"):
        cases = [
            (2.0 * np.sqrt(1.0 + tr), lambda s: (0.25 * s, (m21 - m12) / s, (m02 - m20) / s, (m10 - m01) / s)),
            (2.0 * np.sqrt(1.0 + m00 - m11 - m22), lambda s: ((m21 - m12) / s, 0.25 * s, (m01 + m10) / s, (m02 + m20) / s)),
            (2.0 * np.sqrt(1.0 + m11 - m00 - m22), lambda s: ((m02 - m20) / s, (m01 + m10) / s, 0.25 * s, (m12 + m21) / s)),
            (2.0 * np.sqrt(1.0 + m22 - m00 - m11), lambda s: ((m10 - m01) / s, (m02 + m20) / s, (m12 + m21) / s, 0.25 * s)),
        ]
        for b, (s, comps) in enumerate(cases):
            sel = branch == b
            if np.any(sel):
                out[sel] = np.stack(comps(s), axis=1)[sel]
    return canonical_quat(out).reshape(shape + (4,))


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product ``a * b``, matching ``R(a) @ R(b)``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    q = np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )
    return canonical_quat(q)


def skew(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def exp_map(rotvec) -> np.ndarray:
    """Rotation matrix of a rotation vector (axis times angle)."""
    v = np.asarray(rotvec, dtype=float)
    theta = np.linalg.norm(v, axis=-1)[..., None, None]
    k = skew(v)
    small = theta < 1e-8
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta**2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta**2 / 24.0, (1.0 - np.cos(safe)) / safe**2)
    return np.eye(3) + a * k + b * (k @ k)


def log_map(r) -> np.ndarray:
    """Rotation vector of a rotation matrix, angle in ``[0, pi]``."""
    r = as_rotation(r)
    q = matrix_to_quat(r)
    vec = q[..., 1:]
    s = np.linalg.norm(vec, axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(s, q[..., :1])
    scale = np.where(s < 1e-12, 2.0, angle / np.where(s < 1e-12, 1.0, s))
    return vec * scale


def axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    return exp_map(axis / np.linalg.norm(axis) * angle)


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def geodesic_angle(a, b) -> np.ndarray | float:
    """Angle of the relative rotation ``a^T b``, in ``[0, pi]``.

    Evaluated as ``atan2(|axial part| , (trace - 1) / 2)`` which equals
    ``arccos((trace(a^T b) - 1) / 2)`` for rotations but keeps full
    precision for nearly identical arguments.
    """
    rel = np.swapaxes(as_rotation(a), -1, -2) @ as_rotation(b)
    cos = (np.trace(rel, axis1=-2, axis2=-1) - 1.0) / 2.0
    axial = np.stack(
        [rel[..., 2, 1] - rel[..., 1, 2], rel[..., 0, 2] - rel[..., 2, 0], rel[..., 1, 0] - rel[..., 0, 1]],
        axis=-1,
    )
    sin = np.linalg.norm(axial, axis=-1) / 2.0
    angle = np.clip(np.arctan2(sin, cos), 0.0, np.pi)
    return float(angle) if np.ndim(angle) == 0 else angle


def project_to_so3(m) -> np.ndarray:
    """Frobenius-nearest rotation to ``m`` (batched over leading axes).

    Raises DegenerateMatrix when the smallest singular value is at or
    below ``1e-12``.
    """
    m = as_rotation(m)
    u, s, vt = np.linalg.svd(m)
    if np.any(s[..., -1] <= SINGULAR_TOL) or not np.all(np.isfinite(s)):
        raise DegenerateMatrix(f"matrix is rank deficient (smallest singular value {s[..., -1].min():.3g})")
    d = np.sign(np.linalg.det(u @ vt))
    u = u.copy()
    u[..., :, 2] *= d[..., None]
    return u @ vt


def average_rotation(estimates, weights=None) -> np.ndarray:
    """Chordal L2 mean: projection of the weighted sum onto SO(3)."""
    r = as_rotation(estimates)
    if r.ndim == 2:
        r = r[None]
    if r.shape[0] == 0:
        raise ValueError("need at least one rotation to average")
    if weights is None:
        w = np.ones(r.shape[0])
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (r.shape[0],):
            raise ValueError("weights must match the number of estimates")
        if np.any(w < 0) or not np.any(w > 0):
            raise ValueError("weights must be non-negative and not all zero")
    total = np.einsum("k,kij->ij", w, r)
    return project_to_so3(total)


def random_rotation(rng: np.random.Generator, size=None, max_angle: float | None = None) -> np.ndarray:
    """Random rotations.

    Uniform (Haar) when ``max_angle`` is None, otherwise a uniformly random
    axis with angle uniform in ``[0, max_angle]``.
    """
    shape = () if size is None else (size,) if np.isscalar(size) else tuple(size)
    if max_angle is None:
        q = rng.standard_normal(shape + (4,))
        return quat_to_matrix(canonical_quat(q))
    axis = rng.standard_normal(shape + (3,))
    axis /= np.linalg.norm(axis, axis=-1, keepdims=True)
    angle = rng.uniform(0.0, max_angle, size=shape)
    return exp_map(axis * np.asarray(angle)[..., None])


def slerp(a, b, t) -> np.ndarray:
    """Geodesic interpolation from ``a`` (t=0) to ``b`` (t=1)."""
    a = as_rotation(a)
    rel = np.swapaxes(a, -1, -2) @ as_rotation(b)
    return a @ exp_map(log_map(rel) * np.asarray(t, dtype=float)[..., None])


def twist_angle(r, axis) -> np.ndarray | float:
    """Signed rotation angle of ``r`` about ``axis`` (swing-twist split)."""
    q = matrix_to_quat(r)
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    proj = q[..., 1:] @ axis
    angle = 2.0 * np.arctan2(proj, q[..., 0])
    angle = (angle + np.pi) % (2.0 * np.pi) - np.pi
    return float(angle) if np.ndim(angle) == 0 else angle
