"""Motion generators: damped-least-squares IK, operational-space control, and
quintic trajectory interpolation.

All solvers are batched over environments. Task-space errors follow the
convention of :func:`orbitlite.spatial.pose_error`: linear error first,
axis-angle orientation error second, world frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dynamics, kinematics
from .spatial import Transform, pose_error


@dataclass
class IkParams:
    damping: float = 0.05        # lambda in the damped pseudo-inverse
    pos_gain: float = 1.0
    rot_gain: float = 1.0
    max_step: float = 0.2        # per-solve joint step clamp, rad (inf-norm scaled)


@dataclass
class OscParams:
    kp_task: np.ndarray | float = 100.0     # per-axis or scalar task stiffness
    kd_task: np.ndarray | float = 20.0
    kp_null: float = 0.0
    kd_null: float = 0.0
    posture: np.ndarray | None = None       # nullspace joint target
    eps: float = 1e-4                       # task-inertia regularization


def dls_ik_step(J: np.ndarray, err: np.ndarray, params: IkParams):
    """One damped-least-squares step: dq = Jᵀ (J Jᵀ + λ²I)⁻¹ (gains · err).

    ``J`` is (N, k, n) with k = 3 (position only) or 6 (full pose); ``err``
    is (N, k). Returns (dq (N, n), fault (N,) bool); fault marks envs whose
    solve failed (only possible at λ = 0 near singularities).
    """
    J = np.asarray(J, dtype=np.float64)
    err = np.asarray(err, dtype=np.float64)
    n_env, k, _ = J.shape
    gains = np.ones(k)
    gains[: min(3, k)] = params.pos_gain
    if k > 3:
        gains[3:] = params.rot_gain
    rhs = err * gains
    A = J @ np.swapaxes(J, 1, 2) + (params.damping ** 2) * np.eye(k)
    fault = np.zeros(n_env, dtype=bool)
    try:
        y = np.linalg.solve(A, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        y = np.zeros_like(rhs)
        for i in range(n_env):
            try:
                y[i] = np.linalg.solve(A[i], rhs[i])
            except np.linalg.LinAlgError:
                fault[i] = True
    dq = np.einsum("nkj,nk->nj", J, y)
    bad = ~np.isfinite(dq).all(axis=1)
    if bad.any():
        fault |= bad
        dq[bad] = 0.0
    if np.isfinite(params.max_step):
        peak = np.abs(dq).max(axis=1)
        scale = np.maximum(peak / params.max_step, 1.0)
        dq = dq / scale[:, None]
    return dq, fault


def osc_torques(
    model,
    params: dynamics.ArticulationParams,
    q: np.ndarray,
    qd: np.ndarray,
    link: str,
    point,
    x_des: Transform,
    osc: OscParams,
    xd_des: np.ndarray | None = None,
    base_pose: Transform | None = None,
    gravity=dynamics.DEFAULT_GRAVITY,
) -> np.ndarray:
    """Operational-space PD with dynamically consistent nullspace posture.

    tau = Jᵀ Λ (kp e − kd (ẋ − ẋ_des)) + g(q) + (I − Jᵀ J̄ᵀ) τ_null,
    Λ = (J M⁻¹ Jᵀ + εI)⁻¹,  J̄ = M⁻¹ Jᵀ Λ.
    """
    n = q.shape[1]
    J = kinematics.geometric_jacobian(model, q, link, point, base_pose)
    M = dynamics.mass_matrix(model, params, q)
    g = dynamics.gravity_torque(model, params, q, gravity)
    x_cur = kinematics.link_pose(model, q, link, base_pose)
    # error is evaluated at the controlled point, not the link origin
    x_cur = Transform(x_cur.apply(np.asarray(point, dtype=np.float64)), x_cur.quat)
    err = pose_error(x_cur, x_des)
    xdot = np.einsum("nij,nj->ni", J, qd)
    if xd_des is not None:
        xdot = xdot - xd_des
    Minv = np.linalg.inv(M)
    JMinv = J @ Minv
    A = JMinv @ np.swapaxes(J, 1, 2) + osc.eps * np.eye(6)
    lam = np.linalg.inv(A)
    F = np.einsum("nij,nj->ni", lam, osc.kp_task * err - osc.kd_task * xdot)
    tau = np.einsum("nji,nj->ni", J, F) + g
    if osc.kp_null > 0.0 or osc.kd_null > 0.0:
        posture = osc.posture if osc.posture is not None else np.zeros(n)
        tau_null = osc.kp_null * (posture - q) - osc.kd_null * qd
        Jbar = Minv @ np.swapaxes(J, 1, 2) @ lam
        NT = np.eye(n) - np.swapaxes(J, 1, 2) @ np.swapaxes(Jbar, 1, 2)
        tau = tau + np.einsum("nij,nj->ni", NT, tau_null)
    return tau


# ---------------------------------------------------------------------------
# quintic interpolation

@dataclass
class QuinticSegment:
    """Fifth-order polynomial per channel: coeffs (..., 6), low order first."""

    coeffs: np.ndarray
    duration: float


def quintic_fit(q0, v0, a0, q1, v1, a1, duration: float) -> QuinticSegment:
    """Unique quintic matching position/velocity/acceleration at both ends."""
    if duration <= 0:
        raise ValueError("duration must be > 0")
    q0, v0, a0, q1, v1, a1 = np.broadcast_arrays(
        *(np.asarray(x, dtype=np.float64) for x in (q0, v0, a0, q1, v1, a1))
    )
    T = duration
    h = q1 - q0
    c = np.empty(q0.shape + (6,))
    c[..., 0] = q0
    c[..., 1] = v0
    c[..., 2] = a0 / 2.0
    c[..., 3] = (20.0 * h - (8.0 * v1 + 12.0 * v0) * T - (3.0 * a0 - a1) * T**2) / (2.0 * T**3)
    c[..., 4] = (-30.0 * h + (14.0 * v1 + 16.0 * v0) * T + (3.0 * a0 - 2.0 * a1) * T**2) / (2.0 * T**4)
    c[..., 5] = (12.0 * h - 6.0 * (v1 + v0) * T + (a1 - a0) * T**2) / (2.0 * T**5)
    return QuinticSegment(c, T)


def quintic_sample(seg: QuinticSegment, t: float):
    """(q, v, a) at time t in [0, duration]."""
    if t < 0.0 or t > seg.duration + 1e-12:
        raise ValueError(f"t={t} outside [0, {seg.duration}]")
    c = seg.coeffs
    q = c[..., 0] + t * (c[..., 1] + t * (c[..., 2] + t * (c[..., 3] + t * (c[..., 4] + t * c[..., 5]))))
    v = c[..., 1] + t * (2 * c[..., 2] + t * (3 * c[..., 3] + t * (4 * c[..., 4] + t * 5 * c[..., 5])))
    a = 2 * c[..., 2] + t * (6 * c[..., 3] + t * (12 * c[..., 4] + t * 20 * c[..., 5]))
    return q, v, a


class QuinticUpsampler:
    """Upsample a low-rate command stream to the physics rate, C² at knots.

    Each incoming sample starts a fresh segment from the current boundary
    state to the new sample; end velocity/acceleration are estimated by
    backward differences of the incoming stream unless provided.
    """

    def __init__(self, initial: np.ndarray, period: float):
        self.period = float(period)
        x = np.asarray(initial, dtype=np.float64).copy()
        self._q = x
        self._v = np.zeros_like(x)
        self._a = np.zeros_like(x)
        self._prev_samples = [x.copy(), x.copy()]
        self.segment = quintic_fit(x, self._v, self._a, x, self._v, self._a, self.period)
        self._t = 0.0

    def feed(self, sample: np.ndarray, v1=None, a1=None) -> None:
        """Start a new segment toward ``sample`` over one period."""
        sample = np.asarray(sample, dtype=np.float64)
        h = self.period
        if v1 is None:
            v1 = (sample - self._prev_samples[-1]) / h
        if a1 is None:
            a1 = (sample - 2.0 * self._prev_samples[-1] + self._prev_samples[-2]) / (h * h)
        self.segment = quintic_fit(self._q, self._v, self._a, sample, v1, a1, h)
        self._prev_samples = [self._prev_samples[-1], sample.copy()]
        self._t = 0.0

    def sample(self, dt: float):
        """Advance segment-local time by dt; returns (q, v, a)."""
        self._t = min(self._t + dt, self.segment.duration)
        q, v, a = quintic_sample(self.segment, self._t)
        self._q, self._v, self._a = q, v, a
        return q, v, a
