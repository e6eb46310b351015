"""Independent reference models built symbolically from the Lagrangian.

Nothing here touches the package's recursive algorithms: kinematics come
from closed-form planar geometry and the equations of motion from
``d/dt dL/dqd - dL/dq`` evaluated by sympy.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import sympy as sp


@lru_cache(maxsize=None)
def planar_lagrangian(n: int):
    """Symbolic planar n-link arm with joint axes along z and gravity along -y.

    Returns lambdified ``M(q, p)``, ``h(q, qd, p)`` (Coriolis plus gravity),
    ``G(q, p)`` and the tip Jacobian ``Jv(q, p)`` (2 x n, planar linear part),
    where ``p = (m_1..m_n, L_1..L_n, c_1..c_n, I_1..I_n, g)``; ``c_k`` is the
    CoM distance from joint k and ``I_k`` the inertia about the CoM.
    """
    q = sp.symbols(f"q1:{n + 1}")
    qd = sp.symbols(f"qd1:{n + 1}")
    m = sp.symbols(f"m1:{n + 1}")
    L = sp.symbols(f"L1:{n + 1}")
    c = sp.symbols(f"c1:{n + 1}")
    I = sp.symbols(f"I1:{n + 1}")
    g = sp.Symbol("g")
    t = sp.Symbol("t")
    qt = [sp.Function(f"th{k}")(t) for k in range(n)]
    subs_back = {}
    T = 0
    V = 0
    x0 = y0 = 0
    phi = 0
    for k in range(n):
        phi = phi + qt[k]
        xc = x0 + c[k] * sp.cos(phi)
        yc = y0 + c[k] * sp.sin(phi)
        vx, vy = sp.diff(xc, t), sp.diff(yc, t)
        T += sp.Rational(1, 2) * m[k] * (vx**2 + vy**2)
        T += sp.Rational(1, 2) * I[k] * sp.diff(phi, t) ** 2
        V += m[k] * g * yc
        x0 = x0 + L[k] * sp.cos(phi)
        y0 = y0 + L[k] * sp.sin(phi)
    tip = sp.Matrix([x0, y0])
    Lag = T - V
    qdd = sp.symbols(f"qdd1:{n + 1}")
    for k in range(n):
        subs_back[sp.diff(qt[k], t, 2)] = qdd[k]
    for k in range(n):
        subs_back[sp.diff(qt[k], t)] = qd[k]
    for k in range(n):
        subs_back[qt[k]] = q[k]
    tau = []
    for k in range(n):
        dL_dqd = sp.diff(Lag, sp.diff(qt[k], t))
        expr = sp.diff(dL_dqd, t) - sp.diff(Lag, qt[k])
        tau.append(sp.expand(expr.subs(subs_back)))
    tau = sp.Matrix(tau)
    M = tau.jacobian(qdd)
    h = tau.subs({a: 0 for a in qdd})
    G = h.subs({v: 0 for v in qd})
    Jv = tip.subs(subs_back).jacobian(q)
    params = (*m, *L, *c, *I, g)
    M_f = sp.lambdify((q, params), M, "numpy")
    h_f = sp.lambdify((q, qd, params), h, "numpy")
    G_f = sp.lambdify((q, params), G, "numpy")
    J_f = sp.lambdify((q, params), Jv, "numpy")
    return M_f, h_f, G_f, J_f


class PlanarOracle:
    """Numeric front end of :func:`planar_lagrangian` for given link constants."""

    def __init__(self, masses, lengths, com, izz, g=9.81):
        self.n = len(masses)
        self.p = (*masses, *lengths, *com, *izz, g)
        self._M, self._h, self._G, self._J = planar_lagrangian(self.n)

    def M(self, q):
        return np.array(self._M(tuple(q), self.p), dtype=float)

    def h(self, q, qd):
        return np.array(self._h(tuple(q), tuple(qd), self.p), dtype=float).reshape(-1)

    def G(self, q):
        return np.array(self._G(tuple(q), self.p), dtype=float).reshape(-1)

    def tau(self, q, qd, qdd):
        return self.M(q) @ np.asarray(qdd, float) + self.h(q, qd)

    def tip_jacobian(self, q):
        return np.array(self._J(tuple(q), self.p), dtype=float)


@lru_cache(maxsize=None)
def planar_com_acceleration(n: int):
    """Lambdified base-frame CoM accelerations ``(n, 2)`` of a planar chain.

    Arguments are ``(q, qd, qdd, lengths, com)``.
    """
    t = sp.Symbol("t")
    q = sp.symbols(f"q1:{n + 1}")
    qd = sp.symbols(f"qd1:{n + 1}")
    qdd = sp.symbols(f"qdd1:{n + 1}")
    L = sp.symbols(f"L1:{n + 1}")
    c = sp.symbols(f"c1:{n + 1}")
    qt = [sp.Function(f"th{k}")(t) for k in range(n)]
    subs = {}
    for k in range(n):
        subs[sp.diff(qt[k], t, 2)] = qdd[k]
    for k in range(n):
        subs[sp.diff(qt[k], t)] = qd[k]
    for k in range(n):
        subs[qt[k]] = q[k]
    rows = []
    x0 = y0 = phi = 0
    for k in range(n):
        phi = phi + qt[k]
        xc = x0 + c[k] * sp.cos(phi)
        yc = y0 + c[k] * sp.sin(phi)
        rows.append([sp.diff(xc, t, 2).subs(subs), sp.diff(yc, t, 2).subs(subs)])
        x0 = x0 + L[k] * sp.cos(phi)
        y0 = y0 + L[k] * sp.sin(phi)
    f = sp.lambdify((q, qd, qdd, L, c), sp.Matrix(rows), "numpy")
    return lambda *a: np.array(f(*(tuple(x) for x in a)), dtype=float)
