"""Numba-compiled loop versions of the kernels in ``_kernels_numpy``.

Signatures and return conventions match the numpy module exactly.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _mass(p, q2):
    m1, lc1, i1, l1, m2, lc2, i2 = p[0], p[1], p[2], p[3], p[4], p[5], p[6]
    c2 = math.cos(q2)
    m11 = i1 + m1 * lc1 * lc1 + i2 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2)
    m12 = i2 + m2 * (lc2 * lc2 + l1 * lc2 * c2)
    m22 = i2 + m2 * lc2 * lc2
    return m11, m12, m22


@njit(cache=True)
def _bias(p, q1, q2, qd1, qd2):
    m1, lc1, l1, m2, lc2, g = p[0], p[1], p[3], p[4], p[5], p[7]
    h = m2 * l1 * lc2 * math.sin(q2)
    g2 = m2 * lc2 * g * math.sin(q1 + q2)
    g1 = (m1 * lc1 + m2 * l1) * g * math.sin(q1) + g2
    b1 = -h * (2.0 * qd1 * qd2 + qd2 * qd2) + g1
    b2 = h * qd1 * qd1 + g2
    return b1, b2


@njit(cache=True)
def _accel(p, q1, q2, qd1, qd2, t1, t2):
    m11, m12, m22 = _mass(p, q2)
    b1, b2 = _bias(p, q1, q2, qd1, qd2)
    r1 = t1 - b1
    r2 = t2 - b2
    det = m11 * m22 - m12 * m12
    return (m22 * r1 - m12 * r2) / det, (m11 * r2 - m12 * r1) / det


@njit(cache=True)
def mass_matrix(p, q):
    n = q.shape[0]
    out = np.empty((n, 2, 2))
    for i in range(n):
        m11, m12, m22 = _mass(p, q[i, 1])
        out[i, 0, 0] = m11
        out[i, 0, 1] = m12
        out[i, 1, 0] = m12
        out[i, 1, 1] = m22
    return out


@njit(cache=True)
def coriolis(p, q, qd):
    n = q.shape[0]
    out = np.empty((n, 2))
    l1, m2, lc2 = p[3], p[4], p[5]
    for i in range(n):
        h = m2 * l1 * lc2 * math.sin(q[i, 1])
        out[i, 0] = -h * (2.0 * qd[i, 0] * qd[i, 1] + qd[i, 1] * qd[i, 1])
        out[i, 1] = h * qd[i, 0] * qd[i, 0]
    return out


@njit(cache=True)
def gravity(p, q):
    n = q.shape[0]
    out = np.empty((n, 2))
    m1, lc1, l1, m2, lc2, g = p[0], p[1], p[3], p[4], p[5], p[7]
    for i in range(n):
        g2 = m2 * lc2 * g * math.sin(q[i, 0] + q[i, 1])
        out[i, 1] = g2
        out[i, 0] = (m1 * lc1 + m2 * l1) * g * math.sin(q[i, 0]) + g2
    return out


@njit(cache=True)
def inverse_dynamics(p, q, qd, qdd):
    n = q.shape[0]
    out = np.empty((n, 2))
    for i in range(n):
        m11, m12, m22 = _mass(p, q[i, 1])
        b1, b2 = _bias(p, q[i, 0], q[i, 1], qd[i, 0], qd[i, 1])
        out[i, 0] = m11 * qdd[i, 0] + m12 * qdd[i, 1] + b1
        out[i, 1] = m12 * qdd[i, 0] + m22 * qdd[i, 1] + b2
    return out


@njit(cache=True)
def forward_dynamics(p, q, qd, tau):
    n = q.shape[0]
    out = np.empty((n, 2))
    for i in range(n):
        a1, a2 = _accel(p, q[i, 0], q[i, 1], qd[i, 0], qd[i, 1], tau[i, 0], tau[i, 1])
        out[i, 0] = a1
        out[i, 1] = a2
    return out


@njit(cache=True)
def rk4_integrate(p, q0, qd0, tau_stages, dt, limit):
    n = tau_stages.shape[0]
    q = np.empty((n + 1, 2))
    qd = np.empty((n + 1, 2))
    q[0, 0], q[0, 1] = q0[0], q0[1]
    qd[0, 0], qd[0, 1] = qd0[0], qd0[1]
    x1, x2, v1, v2 = q0[0], q0[1], qd0[0], qd0[1]
    h2 = 0.5 * dt
    for k in range(n):
        ta1, ta2 = tau_stages[k, 0, 0], tau_stages[k, 0, 1]
        tb1, tb2 = tau_stages[k, 1, 0], tau_stages[k, 1, 1]
        tc1, tc2 = tau_stages[k, 2, 0], tau_stages[k, 2, 1]

        a1, a2 = _accel(p, x1, x2, v1, v2, ta1, ta2)
        k1 = (v1, v2, a1, a2)
        a1, a2 = _accel(p, x1 + h2 * k1[0], x2 + h2 * k1[1],
                        v1 + h2 * k1[2], v2 + h2 * k1[3], tb1, tb2)
        k2 = (v1 + h2 * k1[2], v2 + h2 * k1[3], a1, a2)
        a1, a2 = _accel(p, x1 + h2 * k2[0], x2 + h2 * k2[1],
                        v1 + h2 * k2[2], v2 + h2 * k2[3], tb1, tb2)
        k3 = (v1 + h2 * k2[2], v2 + h2 * k2[3], a1, a2)
        a1, a2 = _accel(p, x1 + dt * k3[0], x2 + dt * k3[1],
                        v1 + dt * k3[2], v2 + dt * k3[3], tc1, tc2)
        k4 = (v1 + dt * k3[2], v2 + dt * k3[3], a1, a2)

        s = dt / 6.0
        x1 = x1 + s * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        x2 = x2 + s * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        v1 = v1 + s * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        v2 = v2 + s * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        if not (abs(x1) <= limit and abs(x2) <= limit and abs(v1) <= limit and abs(v2) <= limit):
            for j in range(k + 1, n + 1):
                q[j, 0] = np.nan
                q[j, 1] = np.nan
                qd[j, 0] = np.nan
                qd[j, 1] = np.nan
            return q, qd, k + 1
        q[k + 1, 0], q[k + 1, 1] = x1, x2
        qd[k + 1, 0], qd[k + 1, 1] = v1, v2
    return q, qd, -1
