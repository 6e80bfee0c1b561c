"""Ground-truth trajectory generation, exact propagation, noise handling.

Truth follows the rigid-body kinematics ``R_dot = R skew(omega)``,
``P_dot = V``, ``V_dot = R a + g``, advanced per sample by the exact
group-exponential sandwich for piecewise-constant inputs (gravity on the
left, body inputs on the right).  Analytic flight profiles (hover, circle,
lissajous) supply trajectories whose body rates and specific forces are
known in closed form.  Velocity ground truth for datasets that only log
positions is reconstructed with a Savitzky-Golay differentiator.

Noise standard deviations are per-sample values at the generation rate; a
continuous white-noise density maps to them by the usual Euler-Maruyama
correspondence (density / sqrt(dt) for sampled noise, sqrt(dt) scaling for
Brownian increments).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy.signal import savgol_filter

from .liegroup import NavState, TangentInput, nav_from_matrix, nav_matrix, se23_exp, so3_exp

if TYPE_CHECKING:
    from .attitude import ReferenceEnvironment

__all__ = [
    "BadParams",
    "TooFewSamples",
    "NoiseSpec",
    "TruthTrajectory",
    "propagate_truth",
    "generate_trajectory",
    "reconstruct_velocity",
]


class BadParams(ValueError):
    """Trajectory parameters are missing, unknown, or out of range."""


class TooFewSamples(ValueError):
    """Not enough samples for the requested reconstruction."""


@dataclass(frozen=True)
class NoiseSpec:
    """Per-sample sensor noise standard deviations and the stream seed.

    ``schedule`` selects the time profile of the sigmas: ``constant`` or a
    linear ``ramp`` from half strength to full strength over a run, whose
    supremum (the end value) is the sigma recorded for diagnostics.
    """

    sigma_omega: np.ndarray = field(default_factory=lambda: np.full(3, 0.01))
    sigma_a: np.ndarray = field(default_factory=lambda: np.full(3, 0.05))
    sigma_m: float = 0.2
    sigma_range: float = 0.05
    seed: int = 0
    schedule: str = "constant"

    def __post_init__(self) -> None:
        so = np.asarray(self.sigma_omega, dtype=float)
        sa = np.asarray(self.sigma_a, dtype=float)
        if so.shape != (3,) or sa.shape != (3,):
            raise ValueError("sigma_omega and sigma_a must be 3-vectors")
        if np.any(so < 0) or np.any(sa < 0) or self.sigma_m < 0 or self.sigma_range < 0:
            raise ValueError("standard deviations must be nonnegative")
        if self.schedule not in ("constant", "ramp"):
            raise ValueError(f"unknown schedule {self.schedule!r}")
        object.__setattr__(self, "sigma_omega", so)
        object.__setattr__(self, "sigma_a", sa)

    def stream(self) -> np.random.Generator:
        """Fresh generator for this spec's seed."""
        return np.random.default_rng(self.seed)

    def scale_at(self, t: float, duration: float) -> float:
        """Instantaneous sigma multiplier of the schedule."""
        if self.schedule == "constant" or duration <= 0.0:
            return 1.0
        return 0.5 + 0.5 * min(max(t / duration, 0.0), 1.0)

    def scaled(self, factor: float) -> "NoiseSpec":
        if factor == 1.0:
            return self
        return dataclasses.replace(
            self,
            sigma_omega=self.sigma_omega * factor,
            sigma_a=self.sigma_a * factor,
            sigma_m=self.sigma_m * factor,
            sigma_range=self.sigma_range * factor,
        )

    def sup_sigma(self) -> np.ndarray:
        """Supremum of the gyro sigma schedule (diagnostic bound vector)."""
        return self.sigma_omega.copy()


@dataclass
class TruthTrajectory:
    """Uniformly sampled truth: states plus the body inputs that drive them."""

    t: np.ndarray
    rot: np.ndarray
    p: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    a: np.ndarray

    def __post_init__(self) -> None:
        n = len(self.t)
        if n < 2:
            raise BadParams("a trajectory needs at least two samples")
        if np.any(np.diff(self.t) <= 0):
            raise BadParams("timestamps must be strictly increasing")
        shapes = {
            "rot": (n, 3, 3),
            "p": (n, 3),
            "v": (n, 3),
            "omega": (n, 3),
            "a": (n, 3),
        }
        for name, want in shapes.items():
            if getattr(self, name).shape != want:
                raise BadParams(f"{name} must have shape {want}")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def state(self, i: int) -> NavState:
        return NavState(r=self.rot[i], p=self.p[i], v=self.v[i])


def _gravity(env: "ReferenceEnvironment | None") -> np.ndarray:
    if env is None:
        return np.array([0.0, 0.0, 9.81])
    return env.g_vec


def propagate_truth(
    x: NavState,
    omega: np.ndarray,
    a: np.ndarray,
    env: "ReferenceEnvironment | None",
    dt: float,
) -> NavState:
    """Advance truth one interval of piecewise-constant body inputs.

    Computes the exact flow of the compact kinematics ``X_dot = X U - G X``
    as ``exp(-G dt) X exp(U dt)`` with ``U = u(skew(omega), 0, a, 1)`` and
    ``G = u(0, 0, -g, 1)``; the left and right epsilon couplings cancel so
    the result stays in the group.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = _gravity(env)
    zero = np.zeros(3)
    left = se23_exp(TangentInput(omega=zero, v=zero, a=g, eps=-1.0), dt)
    right = se23_exp(TangentInput(omega=np.asarray(omega, dtype=float), v=zero, a=np.asarray(a, dtype=float), eps=1.0), dt)
    return nav_from_matrix(left @ nav_matrix(x) @ right)


def _yaw(angle: float) -> np.ndarray:
    return so3_exp(np.array([0.0, 0.0, angle]))


_COMMON_KEYS = {"duration", "rate"}
_KIND_KEYS = {
    "hover": {"p0", "yaw"},
    "circle": {"p0", "radius", "period", "yaw0"},
    "lissajous": {
        "p0",
        "amplitude",
        "frequency",
        "phase",
        "yaw_amplitude",
        "yaw_frequency",
    },
    "replay": {"trajectory"},
}

DEFAULT_START = np.array([-0.061, 1.244, 1.506])


def generate_trajectory(
    kind: str,
    params: dict | None = None,
    env: "ReferenceEnvironment | None" = None,
) -> TruthTrajectory:
    """Sample an analytic flight profile at a fixed rate.

    Kinds and their parameters (all optional, with defaults):

    - ``hover``: stationary at ``p0`` with constant ``yaw``.
    - ``circle``: horizontal circle of ``radius`` and ``period`` starting at
      ``p0``, yaw spinning with the orbit plus offset ``yaw0``; body rate
      and specific force are constant, so exact propagation reproduces the
      profile to round-off.
    - ``lissajous``: per-axis sinusoids ``amplitude * sin(2 pi frequency t
      + phase)`` around ``p0`` with a sinusoidal yaw sweep.
    - ``replay``: pass an existing trajectory through unchanged.

    ``duration`` (s) and ``rate`` (Hz) apply to every generated kind.

    Raises
    ------
    BadParams
        On unknown kind, unknown or malformed parameters.
    """
    params = dict(params or {})
    if kind not in _KIND_KEYS:
        raise BadParams(f"unknown trajectory kind {kind!r}")
    unknown = set(params) - _KIND_KEYS[kind] - _COMMON_KEYS
    if unknown:
        raise BadParams(f"unknown parameters for {kind}: {sorted(unknown)}")

    if kind == "replay":
        traj = params.get("trajectory")
        if not isinstance(traj, TruthTrajectory):
            raise BadParams("replay requires a TruthTrajectory under 'trajectory'")
        return traj

    duration = float(params.get("duration", 30.0))
    rate = float(params.get("rate", 100.0))
    if duration <= 0 or rate <= 0:
        raise BadParams("duration and rate must be positive")
    n = int(round(duration * rate)) + 1
    if n < 2:
        raise BadParams("duration too short for the sample rate")
    t = np.arange(n) / rate
    g = _gravity(env)

    p0 = np.asarray(params.get("p0", DEFAULT_START), dtype=float)
    if p0.shape != (3,):
        raise BadParams("p0 must be a 3-vector")

    rot = np.empty((n, 3, 3))
    if kind == "hover":
        yaw = float(params.get("yaw", 0.0))
        r = _yaw(yaw)
        rot[:] = r
        p = np.tile(p0, (n, 1))
        v = np.zeros((n, 3))
        omega = np.zeros((n, 3))
        a = np.tile(r.T @ (-g), (n, 1))
        return TruthTrajectory(t=t, rot=rot, p=p, v=v, omega=omega, a=a)

    if kind == "circle":
        radius = float(params.get("radius", 2.0))
        period = float(params.get("period", 10.0))
        yaw0 = float(params.get("yaw0", 0.0))
        if radius <= 0 or period <= 0:
            raise BadParams("radius and period must be positive")
        w = 2.0 * np.pi / period
        center = p0 - np.array([radius, 0.0, 0.0])
        cos, sin = np.cos(w * t), np.sin(w * t)
        p = center + radius * np.stack([cos, sin, np.zeros(n)], axis=1)
        v = radius * w * np.stack([-sin, cos, np.zeros(n)], axis=1)
        vdot = -radius * w * w * np.stack([cos, sin, np.zeros(n)], axis=1)
        omega = np.tile([0.0, 0.0, w], (n, 1))
        a = np.empty((n, 3))
        for i in range(n):
            rot[i] = _yaw(w * t[i] + yaw0)
            a[i] = rot[i].T @ (vdot[i] - g)
        return TruthTrajectory(t=t, rot=rot, p=p, v=v, omega=omega, a=a)

    amplitude = np.asarray(params.get("amplitude", [1.0, 0.8, 0.3]), dtype=float)
    frequency = np.asarray(params.get("frequency", [0.10, 0.15, 0.05]), dtype=float)
    phase = np.asarray(params.get("phase", [0.0, np.pi / 2, 0.0]), dtype=float)
    yaw_amplitude = float(params.get("yaw_amplitude", 0.6))
    yaw_frequency = float(params.get("yaw_frequency", 0.05))
    for name, arr in (("amplitude", amplitude), ("frequency", frequency), ("phase", phase)):
        if arr.shape != (3,):
            raise BadParams(f"{name} must be a 3-vector")
    wv = 2.0 * np.pi * frequency
    arg = np.outer(t, wv) + phase
    p = p0 + amplitude * np.sin(arg)
    v = amplitude * wv * np.cos(arg)
    vdot = -amplitude * wv * wv * np.sin(arg)
    wy = 2.0 * np.pi * yaw_frequency
    psi = yaw_amplitude * np.sin(wy * t)
    psidot = yaw_amplitude * wy * np.cos(wy * t)
    omega = np.stack([np.zeros(n), np.zeros(n), psidot], axis=1)
    a = np.empty((n, 3))
    for i in range(n):
        rot[i] = _yaw(psi[i])
        a[i] = rot[i].T @ (vdot[i] - g)
    return TruthTrajectory(t=t, rot=rot, p=p, v=v, omega=omega, a=a)


def reconstruct_velocity(
    positions: np.ndarray, dt: float, window: int = 11, order: int = 3
) -> np.ndarray:
    """Savitzky-Golay differentiation of a uniformly sampled position series.

    Interior samples get the smoothed central derivative; endpoints use the
    one-sided polynomial fit of the boundary window.  For short series the
    window shrinks to the largest odd length that fits.

    Raises
    ------
    TooFewSamples
        With fewer than 5 samples.
    """
    positions = np.asarray(positions, dtype=float)
    n = positions.shape[0]
    if n < 5:
        raise TooFewSamples(f"need at least 5 samples, got {n}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    if window > n:
        window = n if n % 2 == 1 else n - 1
    order = min(order, window - 1)
    return savgol_filter(
        positions, window_length=window, polyorder=order, deriv=1, delta=dt, axis=0, mode="interp"
    )
