"""IMU measurement models and vector-triad attitude observations.

A body-frame measurement of a known inertial reference vector gives one
attitude constraint.  Three unit pairs ``(v_i, r_i)`` with ``v_i`` measured
in the body frame and ``r_i`` fixed in the inertial frame are built either
from accelerometer + magnetometer (gravity and magnetic-field references,
the third pair from their cross product) or from a two-tag UWB baseline
(gravity plus the inter-tag direction).  At zero noise every pair satisfies
``v_i = R^T r_i``.  The accelerometer-based gravity pair relies on the
low-acceleration approximation ``a_m ~ -R^T g``: it is exact at hover and
degrades with ``||V_dot|| / g``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .liegroup import NavState, cross3

if TYPE_CHECKING:
    from .sim import NoiseSpec

__all__ = [
    "DegenerateTriads",
    "ReferenceEnvironment",
    "ImuSample",
    "TriadSet",
    "measure_imu",
    "build_triads",
    "weighting_matrices",
    "two_tag_triads",
]

# Vectors (or their cross products) with norm at or below this threshold
# cannot be normalized into triad directions.
EPS_DEGENERATE = 1e-6


class DegenerateTriads(RuntimeError):
    """Reference or measured directions are too close to collinear or zero."""


def _default_gravity() -> np.ndarray:
    return np.array([0.0, 0.0, 9.81])


def _default_magnetic() -> np.ndarray:
    return np.array([-1.3, 0.0, 1.5])


@dataclass(frozen=True)
class ReferenceEnvironment:
    """Inertial-frame reference vectors: gravity (NED, z down) and magnetic field."""

    g_vec: np.ndarray = field(default_factory=_default_gravity)
    m_r: np.ndarray = field(default_factory=_default_magnetic)

    def __post_init__(self) -> None:
        g = np.asarray(self.g_vec, dtype=float)
        m = np.asarray(self.m_r, dtype=float)
        if g.shape != (3,) or m.shape != (3,):
            raise ValueError("g_vec and m_r must be 3-vectors")
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(m))):
            raise ValueError("reference vectors must be finite")
        gn, mn = np.linalg.norm(g), np.linalg.norm(m)
        if gn <= EPS_DEGENERATE or mn <= EPS_DEGENERATE:
            raise ValueError("reference vectors must be nonzero")
        if np.linalg.norm(np.cross(g, m)) / (gn * mn) <= EPS_DEGENERATE:
            raise ValueError("gravity and magnetic references are collinear")
        object.__setattr__(self, "g_vec", g)
        object.__setattr__(self, "m_r", m)


@dataclass(frozen=True)
class ImuSample:
    """One IMU epoch: rate gyro, accelerometer, magnetometer, timestamp."""

    omega_m: np.ndarray
    a_m: np.ndarray
    m_m: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        for name in ("omega_m", "a_m", "m_m"):
            vec = np.asarray(getattr(self, name), dtype=float)
            if vec.shape != (3,) or not np.all(np.isfinite(vec)):
                raise ValueError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, vec)


@dataclass(frozen=True)
class TriadSet:
    """Three matched unit-vector pairs with weights.

    ``v[i]`` is measured in the body frame, ``r[i]`` is the matching
    inertial reference, and ``s`` are nonnegative weights summing to 3.  The
    third pair is a normalized cross product of the first two, so it is
    orthogonal to both by construction.
    """

    v: np.ndarray
    r: np.ndarray
    s: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self) -> None:
        v = np.asarray(self.v, dtype=float)
        r = np.asarray(self.r, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if v.shape != (3, 3) or r.shape != (3, 3):
            raise ValueError("v and r must be 3x3 (rows are the triad vectors)")
        if np.abs(np.linalg.norm(v, axis=1) - 1.0).max() > 1e-9:
            raise ValueError("measured triad rows must be unit vectors")
        if np.abs(np.linalg.norm(r, axis=1) - 1.0).max() > 1e-9:
            raise ValueError("reference triad rows must be unit vectors")
        if s.shape != (3,) or np.any(s < 0.0) or abs(s.sum() - 3.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 3")
        if max(abs(v[2] @ v[0]), abs(v[2] @ v[1])) > 1e-9:
            raise ValueError("third measured vector must be orthogonal to the first two")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "s", s)


def measure_imu(
    truth: NavState,
    omega: np.ndarray,
    vdot: np.ndarray,
    env: ReferenceEnvironment,
    noise: "NoiseSpec | None" = None,
    rng: np.random.Generator | None = None,
    t: float = 0.0,
    low_freq_accel: bool = False,
) -> ImuSample:
    """Simulate one IMU sample from the true state and its rates.

    The gyro reads the body rate, the accelerometer reads the specific
    force ``R^T (V_dot - g)``, and the magnetometer reads the body-frame
    field ``R^T m_r``.  With ``low_freq_accel`` the accelerometer instead
    returns the low-acceleration approximation ``-R^T g`` (plus noise).
    Noise draws come from ``rng`` in a fixed order (gyro, accel,
    magnetometer), one triple per call; with ``noise`` None the sample is
    exact.
    """
    omega = np.asarray(omega, dtype=float)
    vdot = np.asarray(vdot, dtype=float)
    rt = truth.r.T
    if low_freq_accel:
        accel = -(rt @ env.g_vec)
    else:
        accel = rt @ (vdot - env.g_vec)
    mag = rt @ env.m_r
    gyro = omega
    if noise is not None:
        if rng is None:
            raise ValueError("a seeded generator is required when noise is given")
        gyro = gyro + rng.normal(0.0, 1.0, 3) * noise.sigma_omega
        accel = accel + rng.normal(0.0, 1.0, 3) * noise.sigma_a
        mag = mag + rng.normal(0.0, noise.sigma_m, 3)
    return ImuSample(omega_m=gyro, a_m=accel, m_m=mag, t=t)


def _unit(vec: np.ndarray, what: str) -> np.ndarray:
    n = math.sqrt(vec @ vec)
    if n <= EPS_DEGENERATE:
        raise DegenerateTriads(f"{what} has near-zero norm")
    return vec / n


def build_triads(
    a_m: np.ndarray,
    m_m: np.ndarray,
    env: ReferenceEnvironment,
    s: np.ndarray | tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> TriadSet:
    """Accelerometer/magnetometer triads.

    Pairs the normalized accelerometer with the downward gravity direction
    ``-g/||g||``, the normalized magnetometer with the field direction, and
    closes with the normalized cross products on both sides.

    Raises
    ------
    DegenerateTriads
        If a measurement or a cross product has norm at or below
        ``EPS_DEGENERATE``.
    """
    a_m = np.asarray(a_m, dtype=float)
    m_m = np.asarray(m_m, dtype=float)
    v1 = _unit(a_m, "accelerometer sample")
    v2 = _unit(m_m, "magnetometer sample")
    v3 = _unit(cross3(v1, v2), "measured cross product")
    r1 = _unit(-env.g_vec, "gravity reference")
    r2 = _unit(env.m_r, "magnetic reference")
    r3 = _unit(cross3(r1, r2), "reference cross product")
    return TriadSet(v=np.stack([v1, v2, v3]), r=np.stack([r1, r2, r3]), s=np.asarray(s, dtype=float))


def weighting_matrices(triads: TriadSet) -> tuple[np.ndarray, np.ndarray]:
    """Weighted outer-product sums ``(M_r, M_B)`` of the reference and body sides."""
    m_r = np.zeros((3, 3))
    m_b = np.zeros((3, 3))
    for i in range(3):
        m_r += triads.s[i] * np.outer(triads.r[i], triads.r[i])
        m_b += triads.s[i] * np.outer(triads.v[i], triads.v[i])
    return m_r, m_b


def two_tag_triads(
    g1: np.ndarray,
    g2: np.ndarray,
    a_m: np.ndarray,
    s1_body: np.ndarray,
    env: ReferenceEnvironment,
    s: np.ndarray | tuple[float, float, float] = (1.0, 1.0, 1.0),
) -> TriadSet:
    """Triads from two tag positions and the body-frame baseline.

    ``g1`` and ``g2`` are the reconstructed inertial positions of two tags
    mounted on the vehicle and ``s1_body`` is the known body-frame vector
    from the vehicle center to tag 1.  The center is the midpoint, the
    inter-tag direction replaces the magnetometer pair, and gravity supplies
    the first pair as in :func:`build_triads`.

    Raises
    ------
    DegenerateTriads
        If the tags coincide, the accelerometer is degenerate, or the
        baseline is parallel to gravity.
    """
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    a_m = np.asarray(a_m, dtype=float)
    s1_body = np.asarray(s1_body, dtype=float)
    center = 0.5 * (g1 + g2)
    baseline = g1 - center
    v1 = _unit(a_m, "accelerometer sample")
    r1 = _unit(-env.g_vec, "gravity reference")
    v2 = _unit(s1_body, "body-frame tag baseline")
    r2 = _unit(baseline, "inertial tag baseline")
    v3 = _unit(np.cross(a_m, s1_body), "accelerometer x baseline")
    r3 = _unit(np.cross(-env.g_vec, baseline), "gravity x baseline")
    return TriadSet(v=np.stack([v1, v2, v3]), r=np.stack([r1, r2, r3]), s=np.asarray(s, dtype=float))
