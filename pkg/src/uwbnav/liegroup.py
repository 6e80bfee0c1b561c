"""Matrix Lie group primitives for extended-pose navigation.

The navigation state (attitude, position, velocity) is embedded in a 5x5
matrix group: ``X = [[R, P, V], [0, 1, 0], [0, 0, 1]]`` with ``R`` a rotation
matrix and ``P``, ``V`` column 3-vectors.  Inputs live on a tangent
submanifold spanned by ``u(skew(omega), v, a, eps)`` whose exponential has a
closed form (Rodrigues terms plus two Jacobian-like series for the
translation columns).  This module provides the skew/vex pair, the
antisymmetric projector, normalized attitude distances, the closed-form
exponentials, group composition with re-orthonormalization, and quaternion
conversions used by the quaternion filter variant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NotAntisymmetric",
    "NotInGroup",
    "TangentInput",
    "NavState",
    "skew",
    "cross3",
    "vex",
    "pa",
    "upsilon",
    "attitude_distance",
    "weighted_distance",
    "so3_exp",
    "se23_exp",
    "tangent_matrix",
    "nav_matrix",
    "nav_from_matrix",
    "compose",
    "project_rotation",
    "quat_to_rot",
    "rot_to_quat",
    "quat_multiply",
    "quat_normalize",
    "quat_from_rotvec",
]

# Frobenius drift above which a rotation block is re-orthonormalized, and
# the hard ceiling beyond which a matrix is rejected as not a group element.
REORTHONORMALIZE_THRESHOLD = 1e-12
GROUP_TOL = 1e-9

# Below this angle the Rodrigues coefficients switch to second-order Taylor
# expansions to avoid 0/0.
SMALL_ANGLE = 1e-6


class NotAntisymmetric(ValueError):
    """Input matrix is too far from antisymmetric for vex to be meaningful."""


class NotInGroup(ValueError):
    """A 5x5 matrix does not embed a navigation state."""


def skew(v: np.ndarray) -> np.ndarray:
    """Map a 3-vector to its antisymmetric cross-product matrix.

    ``skew(v) @ y == np.cross(v, y)`` for all ``y``.
    """
    x, y, z = np.asarray(v, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product of two 3-vectors by direct indexing.

    Equivalent to ``np.cross(a, b)`` for shape-(3,) inputs; avoids the
    general-axis machinery, which dominates the per-step cost of the
    filter loop.
    """
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def vex(m: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Inverse of :func:`skew`.

    Raises
    ------
    NotAntisymmetric
        If ``||m + m.T||_F`` exceeds ``tol``.
    """
    m = np.asarray(m, dtype=float)
    if np.linalg.norm(m + m.T) > tol:
        raise NotAntisymmetric("vex input deviates from antisymmetry")
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def pa(m: np.ndarray) -> np.ndarray:
    """Antisymmetric projection ``(m - m.T) / 2``."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m - m.T)


def upsilon(m: np.ndarray) -> np.ndarray:
    """Composition ``vex(pa(m))``, the axis of the antisymmetric part."""
    m = np.asarray(m, dtype=float)
    return 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])


def attitude_distance(r: np.ndarray) -> float:
    """Normalized attitude distance ``tr(I - R) / 4`` in ``[0, 1]``.

    Equals ``||I - R||_F^2 / 8``; zero iff ``R`` is the identity, one at a
    half-turn.
    """
    r = np.asarray(r, dtype=float)
    return float((3.0 - r.trace()) / 4.0)


def weighted_distance(m: np.ndarray, r: np.ndarray) -> float:
    """Weighted attitude distance ``tr(M - M @ R) / 4`` for symmetric M."""
    m = np.asarray(m, dtype=float)
    r = np.asarray(r, dtype=float)
    return float((m.trace() - (m @ r).trace()) / 4.0)


def _rodrigues_coefficients(theta: float) -> tuple[float, float, float, float]:
    """Series coefficients for the rotation and translation blocks.

    Returns ``(A, B, C, D)`` with ``A = sin(t)/t``, ``B = (1-cos(t))/t^2``,
    ``C = (t-sin(t))/t^3``, ``D = (t^2/2 - 1 + cos(t))/t^4``, evaluated by
    second-order Taylor expansion below ``SMALL_ANGLE``.
    """
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return (
            1.0 - t2 / 6.0,
            0.5 - t2 / 24.0,
            1.0 / 6.0 - t2 / 120.0,
            1.0 / 24.0 - t2 / 720.0,
        )
    t2 = theta * theta
    s, c = np.sin(theta), np.cos(theta)
    return (
        s / theta,
        (1.0 - c) / t2,
        (theta - s) / (t2 * theta),
        (0.5 * t2 - 1.0 + c) / (t2 * t2),
    )


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rotation-matrix exponential of a rotation vector (Rodrigues form)."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    a, b, _, _ = _rodrigues_coefficients(theta)
    s = skew(w)
    return np.eye(3) + a * s + b * (s @ s)


@dataclass(frozen=True)
class TangentInput:
    """Input element ``u(skew(omega), v, a, eps)`` of the tangent submanifold.

    ``omega`` fills the rotation block, ``v`` the position column, ``a`` the
    velocity column, and ``eps`` the scalar coupling of velocity into
    position.
    """

    omega: np.ndarray
    v: np.ndarray
    a: np.ndarray
    eps: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "omega", np.asarray(self.omega, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        for name in ("omega", "v", "a"):
            vec = getattr(self, name)
            if vec.shape != (3,) or not np.all(np.isfinite(vec)):
                raise ValueError(f"{name} must be a finite 3-vector")


def tangent_matrix(u: TangentInput) -> np.ndarray:
    """5x5 matrix embedding of a tangent input."""
    m = np.zeros((5, 5))
    m[:3, :3] = skew(u.omega)
    m[:3, 3] = u.v
    m[:3, 4] = u.a
    m[4, 3] = u.eps
    return m


def se23_exp(u: TangentInput, dt: float) -> np.ndarray:
    """Closed-form matrix exponential ``expm(tangent_matrix(u) * dt)``.

    With ``S = skew(omega * dt)`` and ``theta = ||omega|| * dt``, the result
    has rotation block ``I + A S + B S^2``, velocity column ``J1 a dt``,
    position column ``J1 v dt + eps dt^2 J2 a``, and ``eps dt`` at entry
    ``(4, 3)``, where ``J1 = I + B S + C S^2`` and ``J2 = I/2 + C S + D S^2``
    use the coefficients of :func:`_rodrigues_coefficients`.  Powers of the
    tangent matrix beyond the second vanish outside the rotation block, which
    is what collapses the series to these four coefficients.
    """
    w = u.omega * dt
    theta = float(np.linalg.norm(w))
    a_c, b_c, c_c, d_c = _rodrigues_coefficients(theta)
    s = skew(w)
    s2 = s @ s
    eye = np.eye(3)
    rot = eye + a_c * s + b_c * s2
    j1 = eye + b_c * s + c_c * s2
    j2 = 0.5 * eye + c_c * s + d_c * s2

    out = np.eye(5)
    out[:3, :3] = rot
    out[:3, 3] = j1 @ (u.v * dt) + (u.eps * dt * dt) * (j2 @ u.a)
    out[:3, 4] = j1 @ (u.a * dt)
    out[4, 3] = u.eps * dt
    return out


@dataclass(frozen=True)
class NavState:
    """Navigation state: rotation ``r``, position ``p``, velocity ``v``."""

    r: np.ndarray
    p: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "r", np.asarray(self.r, dtype=float))
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if self.r.shape != (3, 3):
            raise ValueError("rotation must be 3x3")
        if self.p.shape != (3,) or self.v.shape != (3,):
            raise ValueError("position and velocity must be 3-vectors")


def project_rotation(m: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in Frobenius norm (polar decomposition)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    r = u @ vt
    if np.linalg.det(r) < 0.0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return r


def nav_matrix(x: NavState) -> np.ndarray:
    """5x5 group embedding of a navigation state."""
    m = np.eye(5)
    m[:3, :3] = x.r
    m[:3, 3] = x.p
    m[:3, 4] = x.v
    return m


def nav_from_matrix(m: np.ndarray, tol: float = GROUP_TOL) -> NavState:
    """Extract a navigation state from a 5x5 embedding.

    The two bottom rows must match ``[0 0 0 1 0]`` and ``[0 0 0 0 1]`` within
    ``tol`` and the rotation block must be orthonormal within ``tol``;
    rotation drift above ``REORTHONORMALIZE_THRESHOLD`` is repaired by polar
    projection.

    Raises
    ------
    NotInGroup
        If either bottom row or the rotation block deviates beyond ``tol``.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (5, 5):
        raise NotInGroup("expected a 5x5 matrix")
    bottom = np.array([[0.0, 0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 0.0, 1.0]])
    if np.abs(m[3:, :] - bottom).max() > tol:
        raise NotInGroup("bottom rows deviate from the group pattern")
    r = m[:3, :3]
    drift = np.linalg.norm(r.T @ r - np.eye(3))
    if drift > tol:
        raise NotInGroup("rotation block is not orthonormal")
    if drift > REORTHONORMALIZE_THRESHOLD:
        r = project_rotation(r)
    return NavState(r=r, p=m[:3, 3].copy(), v=m[:3, 4].copy())


def compose(x: np.ndarray, y: np.ndarray) -> NavState:
    """Group composition of two 5x5 embeddings, returned as a state."""
    return nav_from_matrix(np.asarray(x, dtype=float) @ np.asarray(y, dtype=float))


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Rescale a quaternion to unit norm."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize a zero or non-finite quaternion")
    return q / n


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion ``[q0, qx, qy, qz]``.

    Uses ``(q0^2 - ||qv||^2) I + 2 qv qv.T + 2 q0 skew(qv)`` which maps the
    quaternion product to a rotation product (Hamilton convention).
    """
    q = np.asarray(q, dtype=float)
    q0, qv = q[0], q[1:]
    return (q0 * q0 - qv @ qv) * np.eye(3) + 2.0 * np.outer(qv, qv) + 2.0 * q0 * skew(qv)


def rot_to_quat(r: np.ndarray) -> np.ndarray:
    """Unit quaternion of a rotation matrix, scalar part non-negative.

    Largest-pivot (Shepperd) branch selection keeps every case away from the
    small-divisor trap.
    """
    r = np.asarray(r, dtype=float)
    t = r.trace()
    candidates = np.array([t, r[0, 0], r[1, 1], r[2, 2]])
    case = int(np.argmax(candidates))
    if case == 0:
        s = np.sqrt(1.0 + t) * 2.0
        q = np.array(
            [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        )
    elif case == 1:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array(
            [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        )
    elif case == 2:
        s = np.sqrt(1.0 - r[0, 0] + r[1, 1] - r[2, 2]) * 2.0
        q = np.array(
            [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 - r[0, 0] - r[1, 1] + r[2, 2]) * 2.0
        q = np.array(
            [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
        )
    q = quat_normalize(q)
    if q[0] < 0.0:
        q = -q
    return q


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton quaternion product ``q1 * q2``."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    w1, v1 = q1[0], q1[1:]
    w2, v2 = q2[0], q2[1:]
    return np.concatenate(
        [[w1 * w2 - v1 @ v2], w1 * v2 + w2 * v1 + np.cross(v1, v2)]
    )


def quat_from_rotvec(w: np.ndarray) -> np.ndarray:
    """Unit quaternion of a rotation vector; satisfies quat_to_rot == so3_exp."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    half = 0.5 * theta
    if theta < SMALL_ANGLE:
        # sin(t/2)/t to second order
        scale = 0.5 - theta * theta / 48.0
    else:
        scale = np.sin(half) / theta
    return np.concatenate([[np.cos(half)], scale * w])
