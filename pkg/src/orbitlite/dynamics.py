"""Batched articulated rigid-body dynamics over environment batches.

Recursive Newton-Euler (inverse dynamics), Composite Rigid Body (mass matrix)
and Articulated Body (forward dynamics) algorithms on the kinematic tree, with
spatial vectors ordered angular-first and expressed in body coordinates.

The production path runs compiled per-env kernels (``_kernels``), parallel
over environments; because environments share no state the results are
bitwise identical for any worker count. Plain-numpy reference implementations
of the same recursions are kept here (``*_reference``) and pinned against the
kernels in the test suite.

Per-environment body parameters (mass, CoM, inertia, joint damping/friction)
live in :class:`ArticulationParams` so domain randomization and payload
attachment can vary them without touching the shared immutable model.
External wrenches are dense arrays of shape (N, num_links, 6), angular-first,
expressed in each body's own frame at its origin.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .description import RobotDescription
from .spatial import skew

DEFAULT_GRAVITY = np.array([0.0, 0.0, -9.81])
_FRICTION_EPS = 1e-3   # tanh regularization width for dry friction, rad/s

_JTYPE_CODE = {"revolute": 0, "prismatic": 1, "fixed": 2}


class DynamicsError(ValueError):
    pass


def configure_threads() -> int:
    """Apply the ORBITLITE_THREADS cap to the kernel thread pool."""
    import numba

    raw = os.environ.get("ORBITLITE_THREADS")
    if raw:
        n = max(1, min(int(raw), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(n)
        return n
    return numba.get_num_threads()


configure_threads()


# ---------------------------------------------------------------------------
# small batched helpers for the reference path (R maps child -> parent coords)

def _rot(R, v):
    return np.einsum("nij,nj->ni", R, v)


def _rot_t(R, v):
    return np.einsum("nji,nj->ni", R, v)


def _motion_to_child(R, r, ang, lin):
    return _rot_t(R, ang), _rot_t(R, lin + np.cross(ang, r))


def _force_to_parent(R, r, ang, lin):
    f = _rot(R, lin)
    return _rot(R, ang) + np.cross(r, f), f


def _crm(v_ang, v_lin, m_ang, m_lin):
    return np.cross(v_ang, m_ang), np.cross(v_ang, m_lin) + np.cross(v_lin, m_ang)


def _crf(v_ang, v_lin, f_ang, f_lin):
    return np.cross(v_ang, f_ang) + np.cross(v_lin, f_lin), np.cross(v_ang, f_lin)


def _apply_inertia(I6, ang, lin):
    h = np.einsum("nij,nj->ni", I6[:, :3, :3], ang) + np.einsum(
        "nij,nj->ni", I6[:, :3, 3:], lin
    )
    g = np.einsum("nij,nj->ni", I6[:, 3:, :3], ang) + np.einsum(
        "nij,nj->ni", I6[:, 3:, 3:], lin
    )
    return h, g


def _xform_matrix(R, r):
    n = R.shape[0]
    X = np.zeros((n, 6, 6))
    Rt = np.swapaxes(R, 1, 2)
    X[:, :3, :3] = Rt
    X[:, 3:, 3:] = Rt
    X[:, 3:, :3] = -np.einsum("nij,njk->nik", Rt, skew(r))
    return X


# ---------------------------------------------------------------------------
# per-environment articulation parameters

@dataclass
class ArticulationParams:
    """Per-env body masses/inertias and joint damping/friction.

    ``spatial`` caches the 6x6 spatial inertia per body; call
    :meth:`mark_dirty` after mutating mass properties.
    """

    mass: np.ndarray          # (N, nb)
    com: np.ndarray           # (N, nb, 3)
    inertia: np.ndarray       # (N, nb, 3, 3) about the CoM
    damping: np.ndarray       # (N, n)
    dry_friction: np.ndarray  # (N, n)
    spatial: np.ndarray = None
    _dirty: bool = True

    @classmethod
    def from_model(cls, model: RobotDescription, num_envs: int) -> "ArticulationParams":
        mass = np.tile([l.mass for l in model.links], (num_envs, 1))
        com = np.tile(np.stack([l.com for l in model.links]), (num_envs, 1, 1))
        inertia = np.tile(np.stack([l.inertia for l in model.links]), (num_envs, 1, 1, 1))
        js = model.dof_joints
        damping = np.tile([j.damping for j in js], (num_envs, 1))
        dry = np.tile([j.dry_friction for j in js], (num_envs, 1))
        return cls(mass, com, inertia, damping, dry)

    def mark_dirty(self):
        self._dirty = True

    def spatial_inertia(self) -> np.ndarray:
        """(N, nb, 6, 6) spatial inertia about each body-frame origin."""
        if self._dirty or self.spatial is None:
            m = self.mass[..., None, None]
            c = skew(self.com)
            I6 = np.zeros(self.mass.shape + (6, 6))
            I6[..., :3, :3] = self.inertia - m * (c @ c)
            I6[..., :3, 3:] = m * c
            I6[..., 3:, :3] = -m * c
            I6[..., 3:, 3:] = m * np.eye(3)
            self.spatial = I6
            self._dirty = False
        return self.spatial

    def set_payload(self, env_ids, link_idx: int, base, m2, com2, inertia2):
        """Compose extra mass into a link for the env rows in ``env_ids``.

        ``base`` holds the unloaded values; ``m2`` (k,), ``com2`` (k, 3) and
        ``inertia2`` (k, 3, 3) describe the payload in the link frame.
        """
        m1 = base.mass[env_ids, link_idx]
        c1 = base.com[env_ids, link_idx]
        i1 = base.inertia[env_ids, link_idx]
        m = m1 + m2
        c = (m1[:, None] * c1 + m2[:, None] * com2) / m[:, None]
        r1 = skew(c1 - c)
        r2 = skew(com2 - c)
        self.mass[env_ids, link_idx] = m
        self.com[env_ids, link_idx] = c
        self.inertia[env_ids, link_idx] = (
            i1 - m1[:, None, None] * (r1 @ r1) + inertia2 - m2[:, None, None] * (r2 @ r2)
        )
        self.mark_dirty()

    def clear_payload(self, env_ids, link_idx: int, base):
        self.mass[env_ids, link_idx] = base.mass[env_ids, link_idx]
        self.com[env_ids, link_idx] = base.com[env_ids, link_idx]
        self.inertia[env_ids, link_idx] = base.inertia[env_ids, link_idx]
        self.mark_dirty()

    def copy(self) -> "ArticulationParams":
        return ArticulationParams(
            self.mass.copy(), self.com.copy(), self.inertia.copy(),
            self.damping.copy(), self.dry_friction.copy(),
        )


@dataclass
class BreakawayJointState:
    """Seal-type joint: resists up to a threshold, then stays free until reset."""

    dof: int
    hold_torque: float
    break_threshold: float
    broken: np.ndarray = None   # (N,) bool

    def init(self, num_envs: int):
        self.broken = np.zeros(num_envs, dtype=bool)
        return self

    def reset(self, env_ids):
        self.broken[env_ids] = False

    def update(self, applied_torque: np.ndarray) -> np.ndarray:
        """Resisting torque for this substep; flips ``broken`` past threshold."""
        self.broken |= np.abs(applied_torque) > self.break_threshold
        resist = -np.clip(applied_torque, -self.hold_torque, self.hold_torque)
        return np.where(self.broken, 0.0, resist)


def update_breakaway(state: BreakawayJointState, applied_torque: np.ndarray) -> np.ndarray:
    return state.update(applied_torque)


# ---------------------------------------------------------------------------
# model-level constants reused across calls

class _TreeCache:
    """Per-model constants: joint axes, motion subspaces, ancestor chains."""

    def __init__(self, model: RobotDescription):
        nb = model.num_links
        self.parent = model.parent_link.astype(np.int64)
        self.R0 = np.zeros((nb, 3, 3))
        self.p0 = np.zeros((nb, 3))
        self.axis = np.zeros((nb, 3))
        self.jtype = np.full(nb, 2, dtype=np.int64)
        self.dof = np.full(nb, -1, dtype=np.int64)
        for b in range(1, nb):
            j = model.joints[model.link_joint[b]]
            self.R0[b] = j.origin.matrix()
            self.p0[b] = j.origin.pos
            self.axis[b] = j.axis
            self.jtype[b] = _JTYPE_CODE[j.type]
            self.dof[b] = model.joint_dof[model.link_joint[b]]
        self.uax = np.einsum("bij,bj->bi", self.R0, self.axis)
        rev = self.jtype == 0
        pris = self.jtype == 1
        self.S_ang = np.where(rev[:, None], self.axis, 0.0)
        self.S_lin = np.where(pris[:, None], self.axis, 0.0)
        lo, hi, vel, eff = model.joint_limit_arrays()
        self.q_lower, self.q_upper = lo, hi
        self.qd_limit, self.effort = vel, eff

    def kernel_args(self):
        return (self.parent, self.jtype, self.dof, self.R0, self.p0, self.axis, self.uax)


def _tree(model: RobotDescription) -> _TreeCache:
    c = getattr(model, "_tree_cache", None)
    if c is None:
        c = _TreeCache(model)
        object.__setattr__(model, "_tree_cache", c)
    return c


def _local_frames(tree: _TreeCache, q: np.ndarray):
    """Per-body (R_pc, r_pc): child frame pose in parent frame coords."""
    n, nb = q.shape[0], tree.parent.shape[0]
    R = np.zeros((n, nb, 3, 3))
    r = np.zeros((n, nb, 3))
    eye = np.eye(3)
    for b in range(1, nb):
        t = tree.jtype[b]
        if t == 0:
            qi = q[:, tree.dof[b]]
            cq, sq = np.cos(qi)[:, None, None], np.sin(qi)[:, None, None]
            ax = tree.axis[b]
            Rm = cq * eye + sq * skew(ax) + (1.0 - cq) * np.outer(ax, ax)
            R[:, b] = np.einsum("ij,njk->nik", tree.R0[b], Rm)
            r[:, b] = tree.p0[b]
        elif t == 1:
            qi = q[:, tree.dof[b]]
            R[:, b] = tree.R0[b]
            r[:, b] = tree.p0[b] + tree.uax[b] * qi[:, None]
        else:
            R[:, b] = tree.R0[b]
            r[:, b] = tree.p0[b]
    return R, r


def _fext_array(f_ext, n, nb) -> np.ndarray:
    if f_ext is None:
        return np.zeros((n, nb, 6))
    f_ext = np.asarray(f_ext, dtype=np.float64)
    if f_ext.shape != (n, nb, 6):
        raise DynamicsError(f"f_ext shape {f_ext.shape} != ({n}, {nb}, 6)")
    return f_ext


def _as_cfg(model, q, *rest):
    q = np.ascontiguousarray(q, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != model.num_dofs:
        raise DynamicsError(f"configuration shape {q.shape} != (N, {model.num_dofs})")
    out = [q]
    for arr in rest:
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        if arr.shape != q.shape:
            raise DynamicsError(f"array shape {arr.shape} != {q.shape}")
        out.append(arr)
    return out


# ---------------------------------------------------------------------------
# public API (kernel-backed)

def inverse_dynamics(
    model: RobotDescription,
    params: ArticulationParams,
    q: np.ndarray,
    qd: np.ndarray,
    qdd: np.ndarray,
    gravity: np.ndarray = DEFAULT_GRAVITY,
    f_ext: np.ndarray | None = None,
) -> np.ndarray:
    """Joint torques realizing ``qdd`` at state (q, qd): tau = M qdd + c + g."""
    q, qd, qdd = _as_cfg(model, q, qd, qdd)
    tree = _tree(model)
    n, nb = q.shape[0], model.num_links
    tau = np.empty_like(q)
    _kernels.k_rnea(
        q, qd, qdd, *tree.kernel_args(), params.spatial_inertia(),
        _fext_array(f_ext, n, nb), np.asarray(gravity, dtype=np.float64), tau,
    )
    return tau


def gravity_torque(model, params, q, gravity=DEFAULT_GRAVITY) -> np.ndarray:
    z = np.zeros_like(q)
    return inverse_dynamics(model, params, q, z, z, gravity)


def mass_matrix(
    model: RobotDescription, params: ArticulationParams, q: np.ndarray
) -> np.ndarray:
    """Joint-space inertia matrix, (N, n, n), symmetric positive definite."""
    (q,) = _as_cfg(model, q)
    tree = _tree(model)
    M = np.empty((q.shape[0], model.num_dofs, model.num_dofs))
    _kernels.k_crba(q, *tree.kernel_args(), params.spatial_inertia(), M)
    return M


def forward_dynamics(
    model: RobotDescription,
    params: ArticulationParams,
    q: np.ndarray,
    qd: np.ndarray,
    tau: np.ndarray,
    gravity: np.ndarray = DEFAULT_GRAVITY,
    f_ext: np.ndarray | None = None,
) -> np.ndarray:
    """Joint accelerations from applied torques (articulated-body recursion)."""
    q, qd, tau = _as_cfg(model, q, qd, tau)
    tree = _tree(model)
    n, nb = q.shape[0], model.num_links
    qdd = np.empty_like(q)
    _kernels.k_aba(
        q, qd, tau, *tree.kernel_args(), params.spatial_inertia(),
        _fext_array(f_ext, n, nb), np.asarray(gravity, dtype=np.float64), qdd,
    )
    return qdd


def fk_points(
    model: RobotDescription, q: np.ndarray, qd: np.ndarray, body_ids, offsets
):
    """World position, velocity, and rotation of body-fixed points.

    Returns (pos (N, k, 3), vel (N, k, 3), rot (N, k, 3, 3)).
    """
    q, qd = _as_cfg(model, q, qd)
    tree = _tree(model)
    body_ids = np.asarray(body_ids, dtype=np.int64)
    offsets = np.ascontiguousarray(offsets, dtype=np.float64)
    k = body_ids.shape[0]
    pos = np.empty((q.shape[0], k, 3))
    vel = np.empty((q.shape[0], k, 3))
    rot = np.empty((q.shape[0], k, 3, 3))
    _kernels.k_fk_points(q, qd, *tree.kernel_args(), body_ids, offsets, pos, vel, rot)
    return pos, vel, rot


# ---------------------------------------------------------------------------
# stepping

def assemble_passive_torque(params: ArticulationParams, qd: np.ndarray) -> np.ndarray:
    """Viscous damping plus smoothed dry friction, to be added to applied torque."""
    return -params.damping * qd - params.dry_friction * np.tanh(qd / _FRICTION_EPS)


def step(
    model: RobotDescription,
    params: ArticulationParams,
    q: np.ndarray,
    qd: np.ndarray,
    tau: np.ndarray,
    dt: float,
    gravity: np.ndarray = DEFAULT_GRAVITY,
    f_ext: np.ndarray | None = None,
):
    """One semi-implicit Euler substep with joint-limit projection.

    Returns (q', qd', fault) where fault marks envs whose state went
    non-finite; their rows are restored to the pre-step state.
    """
    if dt <= 0:
        raise DynamicsError("dt must be > 0")
    tree = _tree(model)
    tau_total = tau + assemble_passive_torque(params, qd)
    qdd = forward_dynamics(model, params, q, qd, tau_total, gravity, f_ext)
    qd_new = qd + qdd * dt
    qd_new = np.clip(qd_new, -tree.qd_limit, tree.qd_limit)
    q_new = q + qd_new * dt
    over = q_new > tree.q_upper
    under = q_new < tree.q_lower
    q_new = np.clip(q_new, tree.q_lower, tree.q_upper)
    qd_new = np.where(over, np.minimum(qd_new, 0.0), qd_new)
    qd_new = np.where(under, np.maximum(qd_new, 0.0), qd_new)
    fault = ~(np.isfinite(q_new).all(axis=1) & np.isfinite(qd_new).all(axis=1))
    if fault.any():
        q_new[fault] = q[fault]
        qd_new[fault] = qd[fault]
    return q_new, qd_new, fault


def ground_contact_forces(
    foot_pos: np.ndarray,
    foot_vel: np.ndarray,
    stiffness: float = 5000.0,
    damping: float = 100.0,
    tangential_damping: float = 200.0,
):
    """Penalty spring-damper against the plane z = 0.

    ``foot_pos``/``foot_vel`` have shape (N, nf, 3). Returns (force_world
    (N, nf, 3), contact (N, nf) bool, normal_force (N, nf) >= 0).
    """
    pen = -foot_pos[..., 2]
    contact = pen > 0.0
    fn = np.clip(stiffness * pen - damping * foot_vel[..., 2], 0.0, None)
    fn = np.where(contact, fn, 0.0)
    force = np.zeros_like(foot_pos)
    force[..., 2] = fn
    tang = -tangential_damping * foot_vel[..., :2]
    force[..., :2] = np.where(contact[..., None], tang, 0.0)
    return force, contact, fn


def world_wrench_to_body(pose_quat_w: np.ndarray, torque_w, force_w) -> np.ndarray:
    """Express a world wrench at a body origin in that body's frame, (N, 6)."""
    from .spatial import quat_conj, quat_rotate

    qc = quat_conj(pose_quat_w)
    return np.concatenate([quat_rotate(qc, torque_w), quat_rotate(qc, force_w)], axis=-1)


# ---------------------------------------------------------------------------
# reference implementations (plain numpy, used as oracles in tests)

def inverse_dynamics_reference(model, params, q, qd, qdd,
                               gravity=DEFAULT_GRAVITY, f_ext=None):
    tree = _tree(model)
    n, nb = q.shape[0], model.num_links
    f_ext = _fext_array(f_ext, n, nb)
    R, r = _local_frames(tree, q)
    I6 = params.spatial_inertia()
    v_ang = np.zeros((n, nb, 3)); v_lin = np.zeros((n, nb, 3))
    a_ang = np.zeros((n, nb, 3)); a_lin = np.zeros((n, nb, 3))
    f_ang = np.zeros((n, nb, 3)); f_lin = np.zeros((n, nb, 3))
    a_lin[:, 0] = -np.asarray(gravity)
    for b in range(1, nb):
        p = tree.parent[b]
        va, vl = _motion_to_child(R[:, b], r[:, b], v_ang[:, p], v_lin[:, p])
        aa, al = _motion_to_child(R[:, b], r[:, b], a_ang[:, p], a_lin[:, p])
        d = tree.dof[b]
        if d >= 0:
            sa, sl = tree.S_ang[b], tree.S_lin[b]
            vja = sa * qd[:, d][:, None]; vjl = sl * qd[:, d][:, None]
            va = va + vja; vl = vl + vjl
            ca, cl = _crm(va, vl, vja, vjl)
            aa = aa + sa * qdd[:, d][:, None] + ca
            al = al + sl * qdd[:, d][:, None] + cl
        v_ang[:, b], v_lin[:, b] = va, vl
        a_ang[:, b], a_lin[:, b] = aa, al
        ha, hl = _apply_inertia(I6[:, b], va, vl)
        fa, fl = _apply_inertia(I6[:, b], aa, al)
        ba, bl = _crf(va, vl, ha, hl)
        f_ang[:, b] = fa + ba - f_ext[:, b, :3]
        f_lin[:, b] = fl + bl - f_ext[:, b, 3:]
    tau = np.zeros((n, model.num_dofs))
    for b in range(nb - 1, 0, -1):
        d = tree.dof[b]
        if d >= 0:
            tau[:, d] = np.einsum("j,nj->n", tree.S_ang[b], f_ang[:, b]) + np.einsum(
                "j,nj->n", tree.S_lin[b], f_lin[:, b]
            )
        p = tree.parent[b]
        if p >= 0:
            na, nf = _force_to_parent(R[:, b], r[:, b], f_ang[:, b], f_lin[:, b])
            f_ang[:, p] += na
            f_lin[:, p] += nf
    return tau


def mass_matrix_reference(model, params, q):
    tree = _tree(model)
    n, nb, nd = q.shape[0], model.num_links, model.num_dofs
    R, r = _local_frames(tree, q)
    Ic = params.spatial_inertia().copy()
    M = np.zeros((n, nd, nd))
    for b in range(nb - 1, 0, -1):
        p = tree.parent[b]
        if p >= 0:
            X = _xform_matrix(R[:, b], r[:, b])
            Ic[:, p] += np.einsum("nji,njk,nkl->nil", X, Ic[:, b], X)
        d = tree.dof[b]
        if d < 0:
            continue
        sa = np.broadcast_to(tree.S_ang[b], (n, 3))
        sl = np.broadcast_to(tree.S_lin[b], (n, 3))
        fa, fl = _apply_inertia(Ic[:, b], sa, sl)
        M[:, d, d] = np.einsum("j,nj->n", tree.S_ang[b], fa) + np.einsum(
            "j,nj->n", tree.S_lin[b], fl
        )
        a = b
        while tree.parent[a] > 0:
            fa, fl = _force_to_parent(R[:, a], r[:, a], fa, fl)
            a = tree.parent[a]
            da = tree.dof[a]
            if da >= 0:
                val = np.einsum("j,nj->n", tree.S_ang[a], fa) + np.einsum(
                    "j,nj->n", tree.S_lin[a], fl
                )
                M[:, d, da] = val
                M[:, da, d] = val
    return M


def forward_dynamics_reference(model, params, q, qd, tau,
                               gravity=DEFAULT_GRAVITY, f_ext=None):
    """M qdd = tau - bias, solved with the reference mass matrix and RNEA."""
    bias = inverse_dynamics_reference(
        model, params, q, qd, np.zeros_like(q), gravity, f_ext
    )
    M = mass_matrix_reference(model, params, q)
    return np.linalg.solve(M, (tau - bias)[..., None])[..., 0]
