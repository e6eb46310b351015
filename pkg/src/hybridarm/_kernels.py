"""Compiled Newton-Euler kernels.

Everything here works on the packed arrays of :class:`RobotModel` so numba
can compile it.  Public wrappers with argument checking live in
:mod:`hybridarm.dynamics`; the rollout kernel is used by :mod:`hybridarm.mpc`.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=True)
def rotations(fixed, q):
    """Parent-from-child rotations ``fixed[k] @ Rz(q[k])``."""
    n = q.shape[0]
    Rs = np.empty((n, 3, 3))
    for k in range(n):
        c = np.cos(q[k])
        s = np.sin(q[k])
        for r in range(3):
            a = fixed[k, r, 0]
            b = fixed[k, r, 1]
            Rs[k, r, 0] = a * c + b * s
            Rs[k, r, 1] = -a * s + b * c
            Rs[k, r, 2] = fixed[k, r, 2]
    return Rs


@njit(cache=True)
def forward_pass(Rs, offset, com, qd, qdd, w0, dw0, a0, grav,
                 omega, domega, acc_o, acc_c, g_loc):
    """Outward recursion; results are expressed in each link's own frame."""
    n = qd.shape[0]
    wp = w0.copy()
    dwp = dw0.copy()
    ap = a0.copy()
    gp = grav.copy()
    t1 = np.empty(3)
    t2 = np.empty(3)
    v = np.empty(3)
    wpar = np.empty(3)
    for k in range(n):
        R = Rs[k]
        p = offset[k]
        # origin acceleration of frame k, still in parent coordinates
        _cross(dwp, p, t1)
        _cross(wp, p, v)
        _cross(wp, v, t2)
        for r in range(3):
            v[r] = ap[r] + t1[r] + t2[r]
        # rotate parent quantities into the child frame (R^T x)
        for r in range(3):
            acc_o[k, r] = R[0, r] * v[0] + R[1, r] * v[1] + R[2, r] * v[2]
            wpar[r] = R[0, r] * wp[0] + R[1, r] * wp[1] + R[2, r] * wp[2]
            domega[k, r] = R[0, r] * dwp[0] + R[1, r] * dwp[1] + R[2, r] * dwp[2]
            g_loc[k, r] = R[0, r] * gp[0] + R[1, r] * gp[1] + R[2, r] * gp[2]
        omega[k, 0] = wpar[0]
        omega[k, 1] = wpar[1]
        omega[k, 2] = wpar[2] + qd[k]
        # qd_k * (w_parent x z)
        domega[k, 0] += qd[k] * wpar[1]
        domega[k, 1] -= qd[k] * wpar[0]
        domega[k, 2] += qdd[k]
        c = com[k]
        _cross(domega[k], c, t1)
        _cross(omega[k], c, v)
        _cross(omega[k], v, t2)
        for r in range(3):
            acc_c[k, r] = acc_o[k, r] + t1[r] + t2[r]
        wp = omega[k]
        dwp = domega[k]
        ap = acc_o[k]
        gp = g_loc[k]


@njit(cache=True)
def rne(Rs, offset, com, mass, inertia, tool, arm, qd, qdd, w0, dw0, a0, grav, fe, ne):
    """Inverse dynamics: joint torques for the given motion and end load.

    ``fe``/``ne`` are the force and moment the end-effector exerts on its
    environment, expressed in the tool frame.
    """
    n = qd.shape[0]
    omega = np.empty((n, 3))
    domega = np.empty((n, 3))
    acc_o = np.empty((n, 3))
    acc_c = np.empty((n, 3))
    g_loc = np.empty((n, 3))
    forward_pass(Rs, offset, com, qd, qdd, w0, dw0, a0, grav,
                 omega, domega, acc_o, acc_c, g_loc)
    tau = np.empty(n)
    f = fe.copy()
    nm = ne.copy()
    p_next = tool
    fr = np.empty(3)
    nr = np.empty(3)
    F = np.empty(3)
    Iw = np.empty(3)
    t1 = np.empty(3)
    t2 = np.empty(3)
    t3 = np.empty(3)
    for k in range(n - 1, -1, -1):
        if k == n - 1:
            for r in range(3):
                fr[r] = f[r]
                nr[r] = nm[r]
        else:
            Rn = Rs[k + 1]
            for r in range(3):
                fr[r] = Rn[r, 0] * f[0] + Rn[r, 1] * f[1] + Rn[r, 2] * f[2]
                nr[r] = Rn[r, 0] * nm[0] + Rn[r, 1] * nm[1] + Rn[r, 2] * nm[2]
        m = mass[k]
        for r in range(3):
            F[r] = m * (acc_c[k, r] - g_loc[k, r])
        I = inertia[k]
        w = omega[k]
        dw = domega[k]
        for r in range(3):
            Iw[r] = I[r, 0] * w[0] + I[r, 1] * w[1] + I[r, 2] * w[2]
        _cross(w, Iw, t1)
        _cross(p_next, fr, t2)
        _cross(com[k], F, t3)
        for r in range(3):
            nm[r] = (nr[r] + t2[r] + t3[r] + t1[r]
                     + I[r, 0] * dw[0] + I[r, 1] * dw[1] + I[r, 2] * dw[2])
            f[r] = fr[r] + F[r]
        tau[k] = nm[2] + arm[k] * qdd[k]
        p_next = offset[k]
    return tau


@njit(cache=True)
def mass_matrix(Rs, offset, com, mass, inertia, tool, arm):
    n = Rs.shape[0]
    M = np.empty((n, n))
    z3 = np.zeros(3)
    zq = np.zeros(n)
    u = np.zeros(n)
    for j in range(n):
        u[:] = 0.0
        u[j] = 1.0
        col = rne(Rs, offset, com, mass, inertia, tool, arm, zq, u, z3, z3, z3, z3, z3, z3)
        for i in range(n):
            M[i, j] = col[i]
    return M


@njit(cache=True)
def cholesky_solve(M, b):
    """Solve ``M x = b`` for SPD ``M``; ``ok`` is False if factorization fails."""
    n = M.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        s = M[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if not s > 0.0:
            return np.zeros(n), False
        L[j, j] = np.sqrt(s)
        for i in range(j + 1, n):
            s = M[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    x = np.empty(n)
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[k]
        x[i] = s / L[i, i]
    return x, True


@njit(cache=True)
def forward_dynamics(fixed, offset, com, mass, inertia, tool, arm, q, qd, tau,
                     w0, dw0, a0, grav, fe, ne):
    """Returns ``(qdd, ok)``; ``ok`` False means M(q) was not SPD."""
    Rs = rotations(fixed, q)
    n = q.shape[0]
    h = rne(Rs, offset, com, mass, inertia, tool, arm, qd, np.zeros(n),
            w0, dw0, a0, grav, fe, ne)
    M = mass_matrix(Rs, offset, com, mass, inertia, tool, arm)
    return cholesky_solve(M, tau - h)


@njit(cache=True)
def semi_implicit_step(fixed, offset, com, mass, inertia, tool, arm, q, qd, tau, dt,
                       w0, dw0, a0, grav, fe, ne):
    qdd, ok = forward_dynamics(fixed, offset, com, mass, inertia, tool, arm, q, qd, tau,
                               w0, dw0, a0, grav, fe, ne)
    qd_new = qd + dt * qdd
    q_new = q + dt * qd_new
    return q_new, qd_new, ok


@njit(cache=True)
def rollout_candidates(fixed, offset, com, mass, inertia, tool, arm, w0, dw0, a0, grav,
                       q0, qd0, cands, preview, qref, qdref,
                       w_e, w_ed, w_slide, lam, w_tau,
                       qmin, qmax, qdmin, qdmax, tau_max, dt):
    """Roll every candidate over the horizon and accumulate the tracking cost.

    ``cands`` is (M, N) saturated candidate torques, ``preview`` (T,) scalar
    temporal weights, ``qref``/``qdref`` (T, N) the reference at the predicted
    times.  Previewed torques are re-clipped to ``+-tau_max``.

    Returns costs (M,), feasible flags (M,), violation step (M,; -1 if none)
    and the predicted joint states (M, T, N) for q and qd.  A candidate whose
    M(q) stops being SPD is reported with violation code -2.
    """
    m_c = cands.shape[0]
    n = q0.shape[0]
    T = preview.shape[0]
    costs = np.zeros(m_c)
    feasible = np.ones(m_c, dtype=np.bool_)
    viol = -np.ones(m_c, dtype=np.int64)
    qs = np.zeros((m_c, T, n))
    qds = np.zeros((m_c, T, n))
    fe = np.zeros(3)
    tau = np.empty(n)
    for c in range(m_c):
        q = q0.copy()
        qd = qd0.copy()
        J = 0.0
        for j in range(T):
            for i in range(n):
                tau[i] = min(max(preview[j] * cands[c, i], -tau_max[i]), tau_max[i])
            q, qd, ok = semi_implicit_step(fixed, offset, com, mass, inertia, tool, arm, q, qd,
                                           tau, dt, w0, dw0, a0, grav, fe, fe)
            if not ok:
                feasible[c] = False
                viol[c] = -2
                break
            qs[c, j] = q
            qds[c, j] = qd
            bad = False
            for i in range(n):
                if q[i] < qmin[i] or q[i] > qmax[i] or qd[i] < qdmin[i] or qd[i] > qdmax[i]:
                    bad = True
            if bad:
                feasible[c] = False
                viol[c] = j
                break
            for i in range(n):
                e = qref[j, i] - q[i]
                ed = qdref[j, i] - qd[i]
                s = ed + lam[i] * e
                J += w_e[i] * e * e + w_ed[i] * ed * ed + w_slide[i] * s * s
                J += w_tau[i] * tau[i] * tau[i]
        if feasible[c]:
            costs[c] = J
        else:
            costs[c] = np.inf
    return costs, feasible, viol, qs, qds
