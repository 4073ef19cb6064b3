"""Vectorized numpy implementations of the two-link dynamics kernels.

All kernels take a packed parameter vector ``p`` laid out as
``[m1, lc1, I1, l1, m2, lc2, I2, g]`` where the forearm entries already
include any hand load (see ``dynamics.LimbModel.packed``).
"""
import numpy as np


def mass_matrix(p, q):
    m1, lc1, i1, l1, m2, lc2, i2, _ = p
    c2 = np.cos(q[:, 1])
    m12 = i2 + m2 * (lc2 * lc2 + l1 * lc2 * c2)
    m11 = i1 + m1 * lc1 * lc1 + i2 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2)
    m22 = np.full_like(c2, i2 + m2 * lc2 * lc2)
    out = np.empty((q.shape[0], 2, 2))
    out[:, 0, 0] = m11
    out[:, 0, 1] = m12
    out[:, 1, 0] = m12
    out[:, 1, 1] = m22
    return out


def coriolis(p, q, qd):
    l1, m2, lc2 = p[3], p[4], p[5]
    h = m2 * l1 * lc2 * np.sin(q[:, 1])
    out = np.empty_like(qd)
    out[:, 0] = -h * (2.0 * qd[:, 0] * qd[:, 1] + qd[:, 1] * qd[:, 1])
    out[:, 1] = h * qd[:, 0] * qd[:, 0]
    return out


def gravity(p, q):
    m1, lc1, _, l1, m2, lc2, _, g = p
    s12 = np.sin(q[:, 0] + q[:, 1])
    out = np.empty_like(q)
    out[:, 1] = m2 * lc2 * g * s12
    out[:, 0] = (m1 * lc1 + m2 * l1) * g * np.sin(q[:, 0]) + out[:, 1]
    return out


def inverse_dynamics(p, q, qd, qdd):
    m = mass_matrix(p, q)
    return np.einsum("nij,nj->ni", m, qdd) + coriolis(p, q, qd) + gravity(p, q)


def forward_dynamics(p, q, qd, tau):
    m = mass_matrix(p, q)
    rhs = tau - coriolis(p, q, qd) - gravity(p, q)
    det = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]
    out = np.empty_like(rhs)
    out[:, 0] = (m[:, 1, 1] * rhs[:, 0] - m[:, 0, 1] * rhs[:, 1]) / det
    out[:, 1] = (m[:, 0, 0] * rhs[:, 1] - m[:, 1, 0] * rhs[:, 0]) / det
    return out


def rk4_integrate(p, q0, qd0, tau_stages, dt, limit):
    """Fixed-step RK4. ``tau_stages[k]`` holds torques at t_k, t_k+dt/2, t_k+dt.

    Returns ``(q, qd, bad)`` where ``bad`` is the first step index whose state
    left ``[-limit, limit]`` or went non-finite, else -1.
    """
    n = tau_stages.shape[0]
    q = np.empty((n + 1, 2))
    qd = np.empty((n + 1, 2))
    q[0] = q0
    qd[0] = qd0
    x = np.concatenate([q0, qd0]).reshape(1, 4)

    def f(x, tau):
        acc = forward_dynamics(p, x[:, :2], x[:, 2:], tau.reshape(1, 2))
        return np.concatenate([x[:, 2:], acc], axis=1)

    for k in range(n):
        ts = tau_stages[k]
        k1 = f(x, ts[0])
        k2 = f(x + 0.5 * dt * k1, ts[1])
        k3 = f(x + 0.5 * dt * k2, ts[1])
        k4 = f(x + dt * k3, ts[2])
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.abs(x) <= limit):
            q[k + 1:] = np.nan
            qd[k + 1:] = np.nan
            return q, qd, k + 1
        q[k + 1] = x[0, :2]
        qd[k + 1] = x[0, 2:]
    return q, qd, -1
