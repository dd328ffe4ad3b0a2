"""Numba kernels for the articulated-dynamics hot path.

Each kernel loops environments in ``prange`` with per-env sequential body
recursions; environments never share state, so results are bitwise identical
for any thread count. Tree constants arrive as flat arrays prepared by
``dynamics._TreeCache``:

  parent[nb]   parent body index (-1 for the base)
  jtype[nb]    0 revolute, 1 prismatic, 2 fixed (slot 0 unused)
  dof[nb]      q index of the body's joint, -1 if fixed
  R0[nb,3,3]   joint origin rotation (child frame in parent frame at q = 0)
  p0[nb,3]     joint origin position
  axis[nb,3]   joint axis in the child frame
  uax[nb,3]    R0 @ axis (prismatic translation direction in parent frame)

Spatial vectors are angular-first, expressed in each body's own frame.
"""

import numpy as np
from numba import njit, prange

_NJIT = dict(cache=True, fastmath=False)


@njit(inline="always")
def _frames(e, q, parent, jtype, dof, R0, p0, axis, uax, R, r):
    nb = parent.shape[0]
    for b in range(1, nb):
        jt = jtype[b]
        for i in range(3):
            r[b, i] = p0[b, i]
        if jt == 0:  # revolute: R = R0 @ rodrigues(axis, q)
            th = q[e, dof[b]]
            c = np.cos(th)
            s = np.sin(th)
            ax = axis[b]
            omc = 1.0 - c
            m00 = c + ax[0] * ax[0] * omc
            m01 = ax[0] * ax[1] * omc - ax[2] * s
            m02 = ax[0] * ax[2] * omc + ax[1] * s
            m10 = ax[1] * ax[0] * omc + ax[2] * s
            m11 = c + ax[1] * ax[1] * omc
            m12 = ax[1] * ax[2] * omc - ax[0] * s
            m20 = ax[2] * ax[0] * omc - ax[1] * s
            m21 = ax[2] * ax[1] * omc + ax[0] * s
            m22 = c + ax[2] * ax[2] * omc
            for i in range(3):
                R[b, i, 0] = R0[b, i, 0] * m00 + R0[b, i, 1] * m10 + R0[b, i, 2] * m20
                R[b, i, 1] = R0[b, i, 0] * m01 + R0[b, i, 1] * m11 + R0[b, i, 2] * m21
                R[b, i, 2] = R0[b, i, 0] * m02 + R0[b, i, 1] * m12 + R0[b, i, 2] * m22
        else:
            for i in range(3):
                for j in range(3):
                    R[b, i, j] = R0[b, i, j]
            if jt == 1:  # prismatic
                d = q[e, dof[b]]
                for i in range(3):
                    r[b, i] += uax[b, i] * d


@njit(inline="always")
def _motion_to_child(R, r, pa, pl, oa, ol):
    """(oa, ol) = child-frame coords of parent motion vector (pa, pl)."""
    # t = pl + pa x r
    t0 = pl[0] + pa[1] * r[2] - pa[2] * r[1]
    t1 = pl[1] + pa[2] * r[0] - pa[0] * r[2]
    t2 = pl[2] + pa[0] * r[1] - pa[1] * r[0]
    for i in range(3):
        oa[i] = R[0, i] * pa[0] + R[1, i] * pa[1] + R[2, i] * pa[2]
        ol[i] = R[0, i] * t0 + R[1, i] * t1 + R[2, i] * t2


@njit(inline="always")
def _force_to_parent_add(R, r, fa, fl, out_a, out_l):
    """Accumulate child force (fa, fl) into parent-frame (out_a, out_l)."""
    g0 = R[0, 0] * fl[0] + R[0, 1] * fl[1] + R[0, 2] * fl[2]
    g1 = R[1, 0] * fl[0] + R[1, 1] * fl[1] + R[1, 2] * fl[2]
    g2 = R[2, 0] * fl[0] + R[2, 1] * fl[1] + R[2, 2] * fl[2]
    n0 = R[0, 0] * fa[0] + R[0, 1] * fa[1] + R[0, 2] * fa[2]
    n1 = R[1, 0] * fa[0] + R[1, 1] * fa[1] + R[1, 2] * fa[2]
    n2 = R[2, 0] * fa[0] + R[2, 1] * fa[1] + R[2, 2] * fa[2]
    out_a[0] += n0 + r[1] * g2 - r[2] * g1
    out_a[1] += n1 + r[2] * g0 - r[0] * g2
    out_a[2] += n2 + r[0] * g1 - r[1] * g0
    out_l[0] += g0
    out_l[1] += g1
    out_l[2] += g2


@njit(inline="always")
def _I_times(I6, a, l, oa, ol):
    for i in range(3):
        oa[i] = (
            I6[i, 0] * a[0] + I6[i, 1] * a[1] + I6[i, 2] * a[2]
            + I6[i, 3] * l[0] + I6[i, 4] * l[1] + I6[i, 5] * l[2]
        )
        ol[i] = (
            I6[i + 3, 0] * a[0] + I6[i + 3, 1] * a[1] + I6[i + 3, 2] * a[2]
            + I6[i + 3, 3] * l[0] + I6[i + 3, 4] * l[1] + I6[i + 3, 5] * l[2]
        )


@njit(**_NJIT, parallel=True)
def k_rnea(q, qd, qdd, parent, jtype, dof, R0, p0, axis, uax, I6, fext, grav, tau):
    N = q.shape[0]
    nb = parent.shape[0]
    for e in prange(N):
        R = np.empty((nb, 3, 3))
        r = np.empty((nb, 3))
        _frames(e, q, parent, jtype, dof, R0, p0, axis, uax, R, r)
        v = np.zeros((nb, 6))
        a = np.zeros((nb, 6))
        f = np.zeros((nb, 6))
        a[0, 3] = -grav[0]
        a[0, 4] = -grav[1]
        a[0, 5] = -grav[2]
        t3 = np.empty(3)
        t3b = np.empty(3)
        for b in range(1, nb):
            p = parent[b]
            _motion_to_child(R[b], r[b], v[p, :3], v[p, 3:], v[b, :3], v[b, 3:])
            _motion_to_child(R[b], r[b], a[p, :3], a[p, 3:], a[b, :3], a[b, 3:])
            d = dof[b]
            if d >= 0:
                jt = jtype[b]
                qdb = qd[e, d]
                qddb = qdd[e, d]
                if jt == 0:
                    for i in range(3):
                        v[b, i] += axis[b, i] * qdb
                    # crm(v)(S qd): ang = v_ang x s*qd ; lin = v_lin x s*qd
                    a[b, 0] += axis[b, 0] * qddb + (v[b, 1] * axis[b, 2] - v[b, 2] * axis[b, 1]) * qdb
                    a[b, 1] += axis[b, 1] * qddb + (v[b, 2] * axis[b, 0] - v[b, 0] * axis[b, 2]) * qdb
                    a[b, 2] += axis[b, 2] * qddb + (v[b, 0] * axis[b, 1] - v[b, 1] * axis[b, 0]) * qdb
                    a[b, 3] += (v[b, 4] * axis[b, 2] - v[b, 5] * axis[b, 1]) * qdb
                    a[b, 4] += (v[b, 5] * axis[b, 0] - v[b, 3] * axis[b, 2]) * qdb
                    a[b, 5] += (v[b, 3] * axis[b, 1] - v[b, 4] * axis[b, 0]) * qdb
                else:
                    for i in range(3):
                        v[b, i + 3] += axis[b, i] * qdb
                    a[b, 3] += axis[b, 0] * qddb + (v[b, 1] * axis[b, 2] - v[b, 2] * axis[b, 1]) * qdb
                    a[b, 4] += axis[b, 1] * qddb + (v[b, 2] * axis[b, 0] - v[b, 0] * axis[b, 2]) * qdb
                    a[b, 5] += axis[b, 2] * qddb + (v[b, 0] * axis[b, 1] - v[b, 1] * axis[b, 0]) * qdb
            # f = I a + crf(v)(I v) - fext
            _I_times(I6[e, b], a[b, :3], a[b, 3:], f[b, :3], f[b, 3:])
            _I_times(I6[e, b], v[b, :3], v[b, 3:], t3, t3b)
            f[b, 0] += v[b, 1] * t3[2] - v[b, 2] * t3[1] + v[b, 4] * t3b[2] - v[b, 5] * t3b[1]
            f[b, 1] += v[b, 2] * t3[0] - v[b, 0] * t3[2] + v[b, 5] * t3b[0] - v[b, 3] * t3b[2]
            f[b, 2] += v[b, 0] * t3[1] - v[b, 1] * t3[0] + v[b, 3] * t3b[1] - v[b, 4] * t3b[0]
            f[b, 3] += v[b, 1] * t3b[2] - v[b, 2] * t3b[1]
            f[b, 4] += v[b, 2] * t3b[0] - v[b, 0] * t3b[2]
            f[b, 5] += v[b, 0] * t3b[1] - v[b, 1] * t3b[0]
            for i in range(6):
                f[b, i] -= fext[e, b, i]
        for b in range(nb - 1, 0, -1):
            d = dof[b]
            if d >= 0:
                if jtype[b] == 0:
                    tau[e, d] = (
                        axis[b, 0] * f[b, 0] + axis[b, 1] * f[b, 1] + axis[b, 2] * f[b, 2]
                    )
                else:
                    tau[e, d] = (
                        axis[b, 0] * f[b, 3] + axis[b, 1] * f[b, 4] + axis[b, 2] * f[b, 5]
                    )
            p = parent[b]
            if p >= 0:
                _force_to_parent_add(R[b], r[b], f[b, :3], f[b, 3:], f[p, :3], f[p, 3:])


@njit(**_NJIT, parallel=True)
def k_crba(q, parent, jtype, dof, R0, p0, axis, uax, I6, M):
    N = q.shape[0]
    nb = parent.shape[0]
    nd = M.shape[1]
    for e in prange(N):
        R = np.empty((nb, 3, 3))
        r = np.empty((nb, 3))
        _frames(e, q, parent, jtype, dof, R0, p0, axis, uax, R, r)
        Ic = I6[e].copy()
        X = np.empty((6, 6))
        T = np.empty((6, 6))
        F = np.empty(6)
        for i in range(nd):
            for j in range(nd):
                M[e, i, j] = 0.0
        for b in range(nb - 1, 0, -1):
            p = parent[b]
            if p >= 0:
                # X (parent->child motion): [[Rt, 0], [-Rt*skew(r), Rt]]
                for i in range(6):
                    for j in range(6):
                        X[i, j] = 0.0
                for i in range(3):
                    for j in range(3):
                        X[i, j] = R[b, j, i]
                        X[i + 3, j + 3] = R[b, j, i]
                # bottom-left: -Rt @ skew(r)
                for i in range(3):
                    X[i + 3, 0] = -(R[b, 1, i] * r[b, 2] - R[b, 2, i] * r[b, 1])
                    X[i + 3, 1] = -(R[b, 2, i] * r[b, 0] - R[b, 0, i] * r[b, 2])
                    X[i + 3, 2] = -(R[b, 0, i] * r[b, 1] - R[b, 1, i] * r[b, 0])
                # Ic[p] += X^T @ Ic[b] @ X
                for i in range(6):
                    for j in range(6):
                        s = 0.0
                        for k in range(6):
                            s += Ic[b, i, k] * X[k, j]
                        T[i, j] = s
                for i in range(6):
                    for j in range(6):
                        s = 0.0
                        for k in range(6):
                            s += X[k, i] * T[k, j]
                        Ic[p, i, j] += s
            d = dof[b]
            if d < 0:
                continue
            if jtype[b] == 0:
                for i in range(6):
                    F[i] = (
                        Ic[b, i, 0] * axis[b, 0]
                        + Ic[b, i, 1] * axis[b, 1]
                        + Ic[b, i, 2] * axis[b, 2]
                    )
                M[e, d, d] = axis[b, 0] * F[0] + axis[b, 1] * F[1] + axis[b, 2] * F[2]
            else:
                for i in range(6):
                    F[i] = (
                        Ic[b, i, 3] * axis[b, 0]
                        + Ic[b, i, 4] * axis[b, 1]
                        + Ic[b, i, 5] * axis[b, 2]
                    )
                M[e, d, d] = axis[b, 0] * F[3] + axis[b, 1] * F[4] + axis[b, 2] * F[5]
            a = b
            while parent[a] > 0:
                # transform F into parent coords (force transform)
                g0 = R[a, 0, 0] * F[3] + R[a, 0, 1] * F[4] + R[a, 0, 2] * F[5]
                g1 = R[a, 1, 0] * F[3] + R[a, 1, 1] * F[4] + R[a, 1, 2] * F[5]
                g2 = R[a, 2, 0] * F[3] + R[a, 2, 1] * F[4] + R[a, 2, 2] * F[5]
                n0 = R[a, 0, 0] * F[0] + R[a, 0, 1] * F[1] + R[a, 0, 2] * F[2]
                n1 = R[a, 1, 0] * F[0] + R[a, 1, 1] * F[1] + R[a, 1, 2] * F[2]
                n2 = R[a, 2, 0] * F[0] + R[a, 2, 1] * F[1] + R[a, 2, 2] * F[2]
                F[0] = n0 + r[a, 1] * g2 - r[a, 2] * g1
                F[1] = n1 + r[a, 2] * g0 - r[a, 0] * g2
                F[2] = n2 + r[a, 0] * g1 - r[a, 1] * g0
                F[3] = g0
                F[4] = g1
                F[5] = g2
                a = parent[a]
                da = dof[a]
                if da >= 0:
                    if jtype[a] == 0:
                        val = axis[a, 0] * F[0] + axis[a, 1] * F[1] + axis[a, 2] * F[2]
                    else:
                        val = axis[a, 0] * F[3] + axis[a, 1] * F[4] + axis[a, 2] * F[5]
                    M[e, d, da] = val
                    M[e, da, d] = val


@njit(**_NJIT, parallel=True)
def k_aba(q, qd, tau, parent, jtype, dof, R0, p0, axis, uax, I6, fext, grav, qdd):
    N = q.shape[0]
    nb = parent.shape[0]
    for e in prange(N):
        R = np.empty((nb, 3, 3))
        r = np.empty((nb, 3))
        _frames(e, q, parent, jtype, dof, R0, p0, axis, uax, R, r)
        v = np.zeros((nb, 6))
        c = np.zeros((nb, 6))
        IA = I6[e].copy()
        pA = np.zeros((nb, 6))
        U = np.zeros((nb, 6))
        dinv = np.zeros(nb)
        uu = np.zeros(nb)
        t3 = np.empty(3)
        t3b = np.empty(3)
        # pass 1: velocities, velocity-product accelerations, bias forces
        for b in range(1, nb):
            p = parent[b]
            _motion_to_child(R[b], r[b], v[p, :3], v[p, 3:], v[b, :3], v[b, 3:])
            d = dof[b]
            if d >= 0:
                qdb = qd[e, d]
                if jtype[b] == 0:
                    for i in range(3):
                        v[b, i] += axis[b, i] * qdb
                    c[b, 0] = (v[b, 1] * axis[b, 2] - v[b, 2] * axis[b, 1]) * qdb
                    c[b, 1] = (v[b, 2] * axis[b, 0] - v[b, 0] * axis[b, 2]) * qdb
                    c[b, 2] = (v[b, 0] * axis[b, 1] - v[b, 1] * axis[b, 0]) * qdb
                    c[b, 3] = (v[b, 4] * axis[b, 2] - v[b, 5] * axis[b, 1]) * qdb
                    c[b, 4] = (v[b, 5] * axis[b, 0] - v[b, 3] * axis[b, 2]) * qdb
                    c[b, 5] = (v[b, 3] * axis[b, 1] - v[b, 4] * axis[b, 0]) * qdb
                else:
                    for i in range(3):
                        v[b, i + 3] += axis[b, i] * qdb
                    c[b, 3] = (v[b, 1] * axis[b, 2] - v[b, 2] * axis[b, 1]) * qdb
                    c[b, 4] = (v[b, 2] * axis[b, 0] - v[b, 0] * axis[b, 2]) * qdb
                    c[b, 5] = (v[b, 0] * axis[b, 1] - v[b, 1] * axis[b, 0]) * qdb
            _I_times(I6[e, b], v[b, :3], v[b, 3:], t3, t3b)
            pA[b, 0] = v[b, 1] * t3[2] - v[b, 2] * t3[1] + v[b, 4] * t3b[2] - v[b, 5] * t3b[1] - fext[e, b, 0]
            pA[b, 1] = v[b, 2] * t3[0] - v[b, 0] * t3[2] + v[b, 5] * t3b[0] - v[b, 3] * t3b[2] - fext[e, b, 1]
            pA[b, 2] = v[b, 0] * t3[1] - v[b, 1] * t3[0] + v[b, 3] * t3b[1] - v[b, 4] * t3b[0] - fext[e, b, 2]
            pA[b, 3] = v[b, 1] * t3b[2] - v[b, 2] * t3b[1] - fext[e, b, 3]
            pA[b, 4] = v[b, 2] * t3b[0] - v[b, 0] * t3b[2] - fext[e, b, 4]
            pA[b, 5] = v[b, 0] * t3b[1] - v[b, 1] * t3b[0] - fext[e, b, 5]
        # pass 2: articulated inertias
        Ia = np.empty((6, 6))
        pa = np.empty(6)
        X = np.empty((6, 6))
        T = np.empty((6, 6))
        for b in range(nb - 1, 0, -1):
            p = parent[b]
            d = dof[b]
            if d >= 0:
                if jtype[b] == 0:
                    for i in range(6):
                        U[b, i] = (
                            IA[b, i, 0] * axis[b, 0]
                            + IA[b, i, 1] * axis[b, 1]
                            + IA[b, i, 2] * axis[b, 2]
                        )
                    dd = axis[b, 0] * U[b, 0] + axis[b, 1] * U[b, 1] + axis[b, 2] * U[b, 2]
                    uu[b] = tau[e, d] - (
                        axis[b, 0] * pA[b, 0] + axis[b, 1] * pA[b, 1] + axis[b, 2] * pA[b, 2]
                    )
                else:
                    for i in range(6):
                        U[b, i] = (
                            IA[b, i, 3] * axis[b, 0]
                            + IA[b, i, 4] * axis[b, 1]
                            + IA[b, i, 5] * axis[b, 2]
                        )
                    dd = axis[b, 0] * U[b, 3] + axis[b, 1] * U[b, 4] + axis[b, 2] * U[b, 5]
                    uu[b] = tau[e, d] - (
                        axis[b, 0] * pA[b, 3] + axis[b, 1] * pA[b, 4] + axis[b, 2] * pA[b, 5]
                    )
                dinv[b] = 1.0 / dd
                for i in range(6):
                    for j in range(6):
                        Ia[i, j] = IA[b, i, j] - U[b, i] * U[b, j] * dinv[b]
                for i in range(6):
                    pa[i] = pA[b, i] + U[b, i] * uu[b] * dinv[b]
            else:
                for i in range(6):
                    for j in range(6):
                        Ia[i, j] = IA[b, i, j]
                for i in range(6):
                    pa[i] = pA[b, i]
            # pa += Ia @ c[b]
            for i in range(6):
                s = 0.0
                for k in range(6):
                    s += Ia[i, k] * c[b, k]
                pa[i] += s
            # IA[p] += X^T Ia X ; pA[p] += force_to_parent(pa)
            for i in range(6):
                for j in range(6):
                    X[i, j] = 0.0
            for i in range(3):
                for j in range(3):
                    X[i, j] = R[b, j, i]
                    X[i + 3, j + 3] = R[b, j, i]
            for i in range(3):
                X[i + 3, 0] = -(R[b, 1, i] * r[b, 2] - R[b, 2, i] * r[b, 1])
                X[i + 3, 1] = -(R[b, 2, i] * r[b, 0] - R[b, 0, i] * r[b, 2])
                X[i + 3, 2] = -(R[b, 0, i] * r[b, 1] - R[b, 1, i] * r[b, 0])
            for i in range(6):
                for j in range(6):
                    s = 0.0
                    for k in range(6):
                        s += Ia[i, k] * X[k, j]
                    T[i, j] = s
            for i in range(6):
                for j in range(6):
                    s = 0.0
                    for k in range(6):
                        s += X[k, i] * T[k, j]
                    IA[p, i, j] += s
            _force_to_parent_add(R[b], r[b], pa[:3], pa[3:], pA[p, :3], pA[p, 3:])
        # pass 3: accelerations
        aacc = np.zeros((nb, 6))
        aacc[0, 3] = -grav[0]
        aacc[0, 4] = -grav[1]
        aacc[0, 5] = -grav[2]
        for b in range(1, nb):
            p = parent[b]
            _motion_to_child(R[b], r[b], aacc[p, :3], aacc[p, 3:], aacc[b, :3], aacc[b, 3:])
            for i in range(6):
                aacc[b, i] += c[b, i]
            d = dof[b]
            if d >= 0:
                s = 0.0
                for i in range(6):
                    s += U[b, i] * aacc[b, i]
                qdd_b = dinv[b] * (uu[b] - s)
                qdd[e, d] = qdd_b
                if jtype[b] == 0:
                    for i in range(3):
                        aacc[b, i] += axis[b, i] * qdd_b
                else:
                    for i in range(3):
                        aacc[b, i + 3] += axis[b, i] * qdd_b


@njit(**_NJIT, parallel=True)
def k_fk_points(q, qd, parent, jtype, dof, R0, p0, axis, uax, body_ids, offsets, pos, vel, rot):
    """World position, velocity, and body rotation for body-fixed points.

    ``offsets`` are per-point positions in the body frame; ``pos``/``vel``
    have shape (N, n_points, 3) and ``rot`` (N, n_points, 3, 3).
    """
    N = q.shape[0]
    nb = parent.shape[0]
    npts = body_ids.shape[0]
    for e in prange(N):
        Rw = np.empty((nb, 3, 3))
        pw = np.empty((nb, 3))
        ww = np.zeros((nb, 3))   # world-frame angular velocity
        vw = np.zeros((nb, 3))   # world-frame linear velocity of frame origin
        R = np.empty((nb, 3, 3))
        r = np.empty((nb, 3))
        _frames(e, q, parent, jtype, dof, R0, p0, axis, uax, R, r)
        for i in range(3):
            pw[0, i] = 0.0
            for j in range(3):
                Rw[0, i, j] = 1.0 if i == j else 0.0
        for b in range(1, nb):
            p = parent[b]
            # world pose
            for i in range(3):
                pw[b, i] = pw[p, i] + Rw[p, i, 0] * r[b, 0] + Rw[p, i, 1] * r[b, 1] + Rw[p, i, 2] * r[b, 2]
                for j in range(3):
                    Rw[b, i, j] = (
                        Rw[p, i, 0] * R[b, 0, j] + Rw[p, i, 1] * R[b, 1, j] + Rw[p, i, 2] * R[b, 2, j]
                    )
            # world velocity of the new origin: v_p + w_p x (pw_b - pw_p)
            dx0 = pw[b, 0] - pw[p, 0]
            dx1 = pw[b, 1] - pw[p, 1]
            dx2 = pw[b, 2] - pw[p, 2]
            vw[b, 0] = vw[p, 0] + ww[p, 1] * dx2 - ww[p, 2] * dx1
            vw[b, 1] = vw[p, 1] + ww[p, 2] * dx0 - ww[p, 0] * dx2
            vw[b, 2] = vw[p, 2] + ww[p, 0] * dx1 - ww[p, 1] * dx0
            for i in range(3):
                ww[b, i] = ww[p, i]
            d = dof[b]
            if d >= 0:
                qdb = qd[e, d]
                # joint axis in world coords (child frame)
                a0 = Rw[b, 0, 0] * axis[b, 0] + Rw[b, 0, 1] * axis[b, 1] + Rw[b, 0, 2] * axis[b, 2]
                a1 = Rw[b, 1, 0] * axis[b, 0] + Rw[b, 1, 1] * axis[b, 1] + Rw[b, 1, 2] * axis[b, 2]
                a2 = Rw[b, 2, 0] * axis[b, 0] + Rw[b, 2, 1] * axis[b, 1] + Rw[b, 2, 2] * axis[b, 2]
                if jtype[b] == 0:
                    ww[b, 0] += a0 * qdb
                    ww[b, 1] += a1 * qdb
                    ww[b, 2] += a2 * qdb
                else:
                    vw[b, 0] += a0 * qdb
                    vw[b, 1] += a1 * qdb
                    vw[b, 2] += a2 * qdb
        for k in range(npts):
            b = body_ids[k]
            o0 = Rw[b, 0, 0] * offsets[k, 0] + Rw[b, 0, 1] * offsets[k, 1] + Rw[b, 0, 2] * offsets[k, 2]
            o1 = Rw[b, 1, 0] * offsets[k, 0] + Rw[b, 1, 1] * offsets[k, 1] + Rw[b, 1, 2] * offsets[k, 2]
            o2 = Rw[b, 2, 0] * offsets[k, 0] + Rw[b, 2, 1] * offsets[k, 1] + Rw[b, 2, 2] * offsets[k, 2]
            pos[e, k, 0] = pw[b, 0] + o0
            pos[e, k, 1] = pw[b, 1] + o1
            pos[e, k, 2] = pw[b, 2] + o2
            vel[e, k, 0] = vw[b, 0] + ww[b, 1] * o2 - ww[b, 2] * o1
            vel[e, k, 1] = vw[b, 1] + ww[b, 2] * o0 - ww[b, 0] * o2
            vel[e, k, 2] = vw[b, 2] + ww[b, 0] * o1 - ww[b, 1] * o0
            for i in range(3):
                for j in range(3):
                    rot[e, k, i, j] = Rw[b, i, j]
