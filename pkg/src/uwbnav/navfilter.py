"""Nonlinear stochastic complementary navigation filter.

Fuses gyro/accelerometer/magnetometer triads with a UWB position fix on
the extended pose group.  The estimator carries attitude, position,
velocity, and an adaptive covariance-bound vector ``sigma_hat``; the
discrete path is a predict/update pair of exact group exponentials

    X_pred = X exp(U dt),        U = u(skew(omega_m), 0, a_m, 1)
    X_new  = exp(-W dt) X_pred,  W = u(skew(w_omega), w_v, w_a - g, 1)

with correction terms computed from the pre-prediction state.  Both a
rotation-matrix and a unit-quaternion attitude parametrization are
supported; they share the translation block math exactly, so the two
variants track each other to round-off.

The continuous right-hand side (for external integrators and consistency
checks) keeps gravity in the velocity law instead of folding it into W;
the two conventions encode identical dynamics.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .attitude import DegenerateTriads, ImuSample, ReferenceEnvironment, TriadSet, build_triads
from .liegroup import (
    TangentInput,
    cross3,
    quat_from_rotvec,
    quat_multiply,
    quat_normalize,
    quat_to_rot,
    se23_exp,
    skew,
)
from .uwb import AnchorSet, GeometryDegenerate, RangeSet, solve_fix

__all__ = [
    "FilterGains",
    "FilterState",
    "CorrectionTerms",
    "Diagnostics",
    "StateDerivative",
    "correction_terms",
    "predict",
    "update",
    "step",
    "quaternion_step",
    "step_with_fix",
    "continuous_rhs",
]

SIGMA_ALERT_FLOOR = -10.0
ATTITUDE_GATE = 1e-6


@dataclass(frozen=True)
class FilterGains:
    """Positive filter constants and the triad confidence weights.

    Defaults are a working set for indoor flight scales.  ``s`` is
    consumed when triads are built inside :func:`step`; only positivity is
    enforced here (closed-loop stability margins are analysis-side and not
    checked at runtime).
    """

    k1: float = 3.0
    kv: float = 3.0
    ka: float = 70.0
    gamma_sigma: float = 0.1
    epsilon: float = 0.5
    k_sigma: float = 0.1
    s: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self) -> None:
        for name in ("k1", "kv", "ka", "gamma_sigma", "epsilon", "k_sigma"):
            if not float(getattr(self, name)) > 0.0:
                raise ValueError(f"{name} must be strictly positive")
        s = np.asarray(self.s, dtype=float)
        if s.shape != (3,) or np.any(s < 0) or abs(s.sum() - 3.0) > 1e-9:
            raise ValueError("s must be 3 nonnegative weights summing to 3")
        object.__setattr__(self, "s", s)


@dataclass(frozen=True)
class FilterState:
    """Estimator state at time ``t``.

    ``attitude`` is either a 3x3 rotation matrix or a scalar-first unit
    quaternion; the shape selects the variant.  States are immutable
    values: every operation returns a new one.
    """

    attitude: np.ndarray
    p_hat: np.ndarray
    v_hat: np.ndarray
    sigma_hat: np.ndarray
    t: float = 0.0

    def __post_init__(self) -> None:
        att = np.asarray(self.attitude, dtype=float)
        if att.shape == (3, 3):
            drift = np.linalg.norm(att.T @ att - np.eye(3))
            if drift > ATTITUDE_GATE:
                raise ValueError(f"attitude is not orthonormal (drift {drift:.2e})")
        elif att.shape == (4,):
            if abs(np.linalg.norm(att) - 1.0) > ATTITUDE_GATE:
                raise ValueError("quaternion attitude is not unit norm")
        else:
            raise ValueError("attitude must be a 3x3 matrix or a 4-vector quaternion")
        for name in ("p_hat", "v_hat", "sigma_hat"):
            vec = np.asarray(getattr(self, name), dtype=float)
            if vec.shape != (3,):
                raise ValueError(f"{name} must be a 3-vector")
            object.__setattr__(self, name, vec)
        object.__setattr__(self, "attitude", att)

    @property
    def variant(self) -> str:
        return "matrix" if self.attitude.shape == (3, 3) else "quaternion"

    def rotation(self) -> np.ndarray:
        """Attitude as a rotation matrix regardless of variant."""
        if self.variant == "matrix":
            return self.attitude
        return quat_to_rot(self.attitude)


@dataclass(frozen=True)
class CorrectionTerms:
    """One evaluation of the correction and adaptation block."""

    e_r: float
    d_v: np.ndarray
    w_omega: np.ndarray
    w_v: np.ndarray
    w_a: np.ndarray
    sigma_dot: np.ndarray

    def __post_init__(self) -> None:
        d = np.asarray(self.d_v, dtype=float)
        if d.shape != (3, 3) or np.any(d != np.diag(np.diag(d))):
            raise ValueError("d_v must be a 3x3 diagonal matrix")


@dataclass(frozen=True)
class Diagnostics:
    """Per-step observability: attitude residual, innovation, adaptation."""

    e_r: float
    innovation_norm: float
    sigma_hat: np.ndarray
    dropout: bool = False
    dropout_reason: str = ""
    sigma_alert: bool = False


@dataclass(frozen=True)
class StateDerivative:
    """Time derivative of the continuous closed-loop estimator."""

    r_dot: np.ndarray
    p_dot: np.ndarray
    v_dot: np.ndarray
    sigma_dot: np.ndarray


def correction_terms(
    state: FilterState, triads: TriadSet, p_y: np.ndarray, gains: FilterGains
) -> CorrectionTerms:
    """Covariance adaptation and correction factors from one measurement set.

    Computes, with ``v_hat_i = R_hat^T r_i`` and the triads' confidence
    weights ``s_i``:

    - ``e_r``: quarter-trace attitude residual
      ``(1/4) Tr sum s_i (r_i r_i^T - R_hat v_hat_i v_i^T R_hat^T)``,
      nonnegative and zero only at alignment;
    - ``d_v``: diagonal matrix of the weighted cross sum
      ``sum s_i v_i x v_hat_i``;
    - ``sigma_dot``: adaptation law
      ``gamma_sigma (e_r+2)/8 exp(e_r) d_v (sum s_i v_i x v_hat_i)
      - k_sigma gamma_sigma sigma_hat``;
    - ``w_omega``: attitude correction
      ``-(k1/2) R_hat (sum s_i v_i x v_hat_i)
      - (1/8)(e_r+2)/(e_r+1) R_hat d_v sigma_hat``;
    - ``w_v``: ``-(kv/epsilon)(p_y - p_hat) - skew(w_omega) p_hat``;
    - ``w_a``: ``-ka (p_y - p_hat) - skew(w_omega) v_hat``.

    Gravity is NOT folded into ``w_a`` here; the discrete step does that
    when it assembles the update exponential.
    """
    r_hat = state.rotation()
    p_y = np.asarray(p_y, dtype=float)
    s = triads.s

    cross = np.zeros(3)
    residual = np.zeros((3, 3))
    for si, vi, ri in zip(s, triads.v, triads.r):
        v_hat_i = r_hat.T @ ri
        cross += si * cross3(vi, v_hat_i)
        residual += si * (np.outer(ri, ri) - r_hat @ np.outer(v_hat_i, vi) @ r_hat.T)
    e_r = 0.25 * float(np.trace(residual))
    d_v = np.diag(cross)

    g = gains
    sigma_dot = (
        g.gamma_sigma * (e_r + 2.0) / 8.0 * np.exp(e_r) * (d_v @ cross)
        - g.k_sigma * g.gamma_sigma * state.sigma_hat
    )
    w_omega = (
        -(g.k1 / 2.0) * (r_hat @ cross)
        - 0.125 * (e_r + 2.0) / (e_r + 1.0) * (r_hat @ (d_v @ state.sigma_hat))
    )
    innovation = p_y - state.p_hat
    w_v = -(g.kv / g.epsilon) * innovation - cross3(w_omega, state.p_hat)
    w_a = -g.ka * innovation - cross3(w_omega, state.v_hat)
    return CorrectionTerms(
        e_r=e_r, d_v=d_v, w_omega=w_omega, w_v=w_v, w_a=w_a, sigma_dot=sigma_dot
    )


def predict(state: FilterState, imu: ImuSample, dt: float) -> FilterState:
    """Right-translate the state by the exact IMU exponential.

    Block evaluation of ``X exp(u(skew(omega_m), 0, a_m, 1) dt)``: the
    attitude composes with the gyro rotation and the translation columns
    pick up the epsilon-coupled position increment.  The product's scalar
    coupling entry (dt in the bottom block) is not representable in the
    state; :func:`update` restores it before applying the left exponential
    so that a predict/update pair equals the full group product.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    exp_u = se23_exp(
        TangentInput(omega=imu.omega_m, v=np.zeros(3), a=imu.a_m, eps=1.0), dt
    )
    r_hat = state.rotation()
    p_new = state.p_hat + state.v_hat * dt + r_hat @ exp_u[:3, 3]
    v_new = state.v_hat + r_hat @ exp_u[:3, 4]
    if state.variant == "matrix":
        att = state.attitude @ exp_u[:3, :3]
    else:
        att = quat_normalize(
            quat_multiply(state.attitude, quat_from_rotvec(imu.omega_m * dt))
        )
    return FilterState(
        attitude=att, p_hat=p_new, v_hat=v_new, sigma_hat=state.sigma_hat, t=state.t + dt
    )


def update(state: FilterState, w: CorrectionTerms, dt: float) -> FilterState:
    """Left-translate a predicted state by the correction exponential.

    Applies ``exp(-W dt)`` with ``W = u(skew(w_omega), w_v, w_a, 1)`` to
    the predicted embedding, restoring the dt coupling entry the predict
    product carries in its bottom block (dropping it would shift the
    position column by O(dt^2) per step and bias the closed loop).
    ``sigma_hat`` advances by one explicit Euler step of ``w.sigma_dot``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    exp_w = se23_exp(
        TangentInput(omega=-w.w_omega, v=-w.w_v, a=-w.w_a, eps=-1.0), dt
    )
    r_e, t_p, t_v = exp_w[:3, :3], exp_w[:3, 3], exp_w[:3, 4]
    p_new = r_e @ state.p_hat + t_p + dt * t_v
    v_new = r_e @ state.v_hat + t_v
    if state.variant == "matrix":
        att = r_e @ state.attitude
    else:
        att = quat_normalize(
            quat_multiply(quat_from_rotvec(-w.w_omega * dt), state.attitude)
        )
    sigma_new = state.sigma_hat + dt * w.sigma_dot
    return FilterState(
        attitude=att, p_hat=p_new, v_hat=v_new, sigma_hat=sigma_new, t=state.t
    )


def step_with_fix(
    state: FilterState,
    imu: ImuSample,
    p_y: np.ndarray,
    env: ReferenceEnvironment,
    gains: FilterGains,
    dt: float,
) -> tuple[FilterState, Diagnostics]:
    """One discrete filter iteration given an already-reconstructed fix.

    Order: build triads from the IMU sample, evaluate corrections at the
    pre-prediction state, predict, update with gravity folded into the
    acceleration correction.  Raises DegenerateTriads if the vector
    observations are unusable (callers with a dropout policy catch it).
    """
    triads = build_triads(imu.a_m, imu.m_m, env, s=gains.s)
    w = correction_terms(state, triads, p_y, gains)
    folded = dataclasses.replace(w, w_a=w.w_a - env.g_vec)
    new = update(predict(state, imu, dt), folded, dt)
    diag = Diagnostics(
        e_r=w.e_r,
        innovation_norm=float(np.linalg.norm(np.asarray(p_y) - state.p_hat)),
        sigma_hat=new.sigma_hat,
        sigma_alert=bool(np.any(new.sigma_hat < SIGMA_ALERT_FLOOR)),
    )
    return new, diag


def step(
    state: FilterState,
    imu: ImuSample,
    ranges: RangeSet,
    anchors: AnchorSet,
    env: ReferenceEnvironment,
    gains: FilterGains,
    dt: float,
) -> tuple[FilterState, Diagnostics]:
    """Full discrete iteration: solve the fix, then correct the state.

    On a degenerate fix geometry or degenerate triads the measurement is
    dropped: the state advances by predict only and the diagnostics flag
    the dropout with its reason.  Works for both attitude variants.
    """
    try:
        fix = solve_fix(anchors, ranges)
        return step_with_fix(state, imu, fix.p, env, gains, dt)
    except (GeometryDegenerate, DegenerateTriads) as err:
        pred = predict(state, imu, dt)
        diag = Diagnostics(
            e_r=float("nan"),
            innovation_norm=float("nan"),
            sigma_hat=pred.sigma_hat,
            dropout=True,
            dropout_reason=f"{type(err).__name__}: {err}",
        )
        return pred, diag


def quaternion_step(
    state: FilterState,
    imu: ImuSample,
    ranges: RangeSet,
    anchors: AnchorSet,
    env: ReferenceEnvironment,
    gains: FilterGains,
    dt: float,
) -> tuple[FilterState, Diagnostics]:
    """Quaternion-attitude iteration; contract identical to :func:`step`.

    The attitude advances by exact quaternion exponentials (gyro on the
    right, correction on the left) and is renormalized; position and
    velocity use the same translation block math as the matrix variant.
    """
    if state.variant != "quaternion":
        raise ValueError("quaternion_step requires a quaternion-attitude state")
    return step(state, imu, ranges, anchors, env, gains, dt)


def continuous_rhs(
    state: FilterState,
    imu: ImuSample,
    w: CorrectionTerms,
    env: ReferenceEnvironment,
) -> StateDerivative:
    """Continuous closed-loop derivative for external integrators.

    ``R_dot = R skew(omega_m) - skew(w_omega) R``,
    ``P_dot = V - skew(w_omega) P - w_v``,
    ``V_dot = R a_m + g - skew(w_omega) V - w_a``; gravity stays in the
    velocity law here (the discrete path folds it into the update
    exponential instead).  ``r_dot`` is the derivative of the rotation
    matrix regardless of the state's attitude variant.
    """
    r_hat = state.rotation()
    r_dot = r_hat @ skew(imu.omega_m) - skew(w.w_omega) @ r_hat
    p_dot = state.v_hat - skew(w.w_omega) @ state.p_hat - w.w_v
    v_dot = r_hat @ imu.a_m + env.g_vec - skew(w.w_omega) @ state.v_hat - w.w_a
    return StateDerivative(r_dot=r_dot, p_dot=p_dot, v_dot=v_dot, sigma_dot=w.sigma_dot)
