"""Planar two-link model of the upper limb (shoulder + elbow, sagittal plane).

Angle convention: ``q[0]`` is the shoulder angle measured from the downward
vertical (flexion positive), ``q[1]`` is elbow flexion relative to the upper
arm axis. ``q = (0, 0)`` is the arm hanging straight down.

All functions accept either a single state (shape ``(2,)``) or a batch
(shape ``(N, 2)``) and return arrays of the matching shape.
"""
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional

import numpy as np

from . import _accel
from .errors import InvalidAnthropometrics, NonFinite, SingularMassMatrix

COND_LIMIT = 1e12
DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class SegmentParams:
    mass: float
    length: float
    com_ratio: float
    inertia_com: float = 0.0

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError(f"segment mass must be > 0, got {self.mass}")
        if not self.length > 0:
            raise ValueError(f"segment length must be > 0, got {self.length}")
        if not 0 < self.com_ratio <= 1:
            raise ValueError(f"com_ratio must lie in (0, 1], got {self.com_ratio}")
        if not self.inertia_com >= 0:
            raise ValueError(f"inertia_com must be >= 0, got {self.inertia_com}")

    @property
    def com(self):
        return self.com_ratio * self.length


@dataclass(frozen=True)
class LimbModel:
    upper_arm: SegmentParams
    forearm: SegmentParams
    hand_load: float = 0.0
    gravity: float = 9.81

    def __post_init__(self):
        if not self.hand_load >= 0:
            raise ValueError(f"hand_load must be >= 0, got {self.hand_load}")
        # g = 0 stays legal for zero-field checks
        if not self.gravity >= 0:
            raise ValueError(f"gravity must be >= 0, got {self.gravity}")

    def with_load(self, kg):
        return replace(self, hand_load=float(kg))

    def with_gravity(self, g):
        return replace(self, gravity=float(g))

    def distal_params(self):
        """Forearm mass, COM distance and COM inertia with the hand load folded in."""
        fa = self.forearm
        m = fa.mass + self.hand_load
        lc = (fa.mass * fa.com + self.hand_load * fa.length) / m
        inertia = (fa.inertia_com + fa.mass * (fa.com - lc) ** 2
                   + self.hand_load * (fa.length - lc) ** 2)
        return m, lc, inertia

    def packed(self):
        ua = self.upper_arm
        m2, lc2, i2 = self.distal_params()
        return np.array([ua.mass, ua.com, ua.inertia_com, ua.length,
                         m2, lc2, i2, self.gravity], dtype=float)

    def characteristic_torque(self):
        """Peak shoulder gravity torque (whole arm horizontal); a torque scale."""
        m2, lc2, _ = self.distal_params()
        ua = self.upper_arm
        return self.gravity * (ua.mass * ua.com + m2 * (ua.length + lc2))


class JointState(NamedTuple):
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray


class Trajectory(NamedTuple):
    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray

    def state(self, i):
        return JointState(self.q[i], self.qd[i], self.qdd[i])


def _batch(*arrays):
    out = [np.atleast_2d(np.asarray(a, dtype=float)) for a in arrays]
    for a in out:
        if a.shape[-1] != 2 or a.ndim != 2:
            raise ValueError(f"expected shape (2,) or (N, 2), got {a.shape}")
    return out


def _unbatch(result, like):
    return result[0] if np.ndim(like) == 1 else result


def mass_matrix(model, q, backend=None):
    (qb,) = _batch(q)
    out = _accel.get_kernels(backend).mass_matrix(model.packed(), qb)
    return _unbatch(out, q)


def coriolis_vector(model, q, qd, backend=None):
    """Coriolis/centrifugal generalized force C(q, qd) qd."""
    qb, qdb = _batch(q, qd)
    out = _accel.get_kernels(backend).coriolis(model.packed(), qb, qdb)
    return _unbatch(out, q)


def gravity_vector(model, q, backend=None):
    (qb,) = _batch(q)
    out = _accel.get_kernels(backend).gravity(model.packed(), qb)
    return _unbatch(out, q)


def inverse_dynamics(model, q, qd, qdd, backend=None):
    """Joint torques tau = M(q) qdd + C(q, qd) qd + G(q)."""
    qb, qdb, qddb = _batch(q, qd, qdd)
    out = _accel.get_kernels(backend).inverse_dynamics(model.packed(), qb, qdb, qddb)
    return _unbatch(out, q)


def _check_conditioning(model, qb):
    m = mass_matrix(model, qb)
    a, b, d = m[:, 0, 0], m[:, 0, 1], m[:, 1, 1]
    half_tr = 0.5 * (a + d)
    rad = np.sqrt(0.25 * (a - d) ** 2 + b * b)
    lo, hi = half_tr - rad, half_tr + rad
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(lo > 0, hi / lo, np.inf)
    worst = int(np.argmax(cond))
    if not cond[worst] <= COND_LIMIT:
        raise SingularMassMatrix(
            f"mass matrix condition number {cond[worst]:.3g} exceeds {COND_LIMIT:g} "
            f"at q={qb[worst].tolist()}")


def forward_dynamics(model, q, qd, tau, backend=None):
    """Solve M(q) qdd = tau - C(q, qd) qd - G(q) for qdd."""
    qb, qdb, taub = _batch(q, qd, tau)
    _check_conditioning(model, qb)
    out = _accel.get_kernels(backend).forward_dynamics(model.packed(), qb, qdb, taub)
    return _unbatch(out, q)


def potential_energy(model, q):
    q = np.asarray(q, dtype=float)
    ua = model.upper_arm
    m2, lc2, _ = model.distal_params()
    q1, q2 = q[..., 0], q[..., 1]
    g = model.gravity
    return -g * (ua.mass * ua.com * np.cos(q1)
                 + m2 * (ua.length * np.cos(q1) + lc2 * np.cos(q1 + q2)))


def kinetic_energy(model, q, qd):
    m = mass_matrix(model, q)
    qd = np.asarray(qd, dtype=float)
    return 0.5 * np.einsum("...i,...ij,...j->...", qd, m, qd)


def simulate(model, q0, qd0, tau_fn: Optional[Callable], dt, duration, backend=None):
    """Integrate the forward dynamics with fixed-step RK4.

    ``tau_fn(t)`` returns the 2-vector of joint torques at time ``t``; ``None``
    means zero torque. Torques are sampled at the RK4 stage times.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not duration >= dt:
        raise ValueError("duration must be >= dt")
    n = int(round(duration / dt))
    q0 = np.asarray(q0, dtype=float).reshape(2)
    qd0 = np.asarray(qd0, dtype=float).reshape(2)
    t = np.arange(n + 1) * dt

    half = np.empty((2 * n + 1, 2))
    if tau_fn is not None:
        for j in range(2 * n + 1):
            half[j] = tau_fn(0.5 * j * dt)
    else:
        half[:] = 0.0
    stages = np.stack([half[0:-1:2], half[1::2], half[2::2]], axis=1)
    stages = np.ascontiguousarray(stages)

    p = model.packed()
    _check_conditioning(model, q0[None, :])
    kern = _accel.get_kernels(backend)
    q, qd, bad = kern.rk4_integrate(p, q0, qd0, stages, float(dt), DIVERGENCE_LIMIT)
    if bad >= 0:
        raise NonFinite(f"simulation diverged at step {bad} (t={bad * dt:.6g} s)")
    _check_conditioning(model, q)
    qdd = kern.forward_dynamics(p, q, qd, half[0::2])
    return Trajectory(t, q, qd, qdd)


# ---------------------------------------------------------------------------
# segment parameter estimation

PREDICTORS = ("height", "weight", "length", "mass", "mass_length_sq",
              "circ_arm", "circ_biceps", "circ_forearm", "circ_wrist")


def _predictors(anthro, segment, mass):
    length = anthro["segment_lengths"][segment]
    circ = anthro.get("circumferences", {})
    values = {
        "height": anthro["height"],
        "weight": anthro["weight"],
        "length": length,
        "mass": mass,
        "mass_length_sq": mass * length ** 2,
    }
    for key in ("arm", "biceps", "forearm", "wrist"):
        if key in circ:
            values["circ_" + key] = circ[key]
    return values


def _check_anthro(anthro):
    def walk(obj, path):
        if isinstance(obj, dict):
            for k, v in obj.items():
                yield from walk(v, f"{path}.{k}" if path else k)
        else:
            yield path, obj

    for path, v in walk(anthro, ""):
        if not np.isfinite(v) or v <= 0:
            raise InvalidAnthropometrics(f"{path} must be a positive measurement, got {v}")
    for seg in ("upper_arm", "forearm"):
        if seg not in anthro.get("segment_lengths", {}):
            raise InvalidAnthropometrics(f"segment_lengths.{seg} is required")
    for key in ("height", "weight"):
        if key not in anthro:
            raise InvalidAnthropometrics(f"{key} is required")


def estimate_segment_params(anthro, coeffs):
    """Upper-arm and forearm parameters from anthropometric measurements.

    Segment mass is ``mass_fraction * weight``; the centre of mass sits at
    ``com_ratio * length``; the transverse moment of inertia about the COM is
    the linear regression ``intercept + sum(coef[k] * predictor[k])`` over the
    predictors in ``PREDICTORS``. Results are clamped into the valid
    ``SegmentParams`` domain.
    """
    _check_anthro(anthro)
    out = []
    for seg in ("upper_arm", "forearm"):
        mass = coeffs["mass_fraction"][seg] * anthro["weight"]
        ratio = float(np.clip(coeffs["com_ratio"][seg], 1e-6, 1.0))
        reg = coeffs["inertia"][seg]
        pred = _predictors(anthro, seg, mass)
        inertia = reg.get("intercept", 0.0)
        for name, c in reg.get("terms", {}).items():
            if name not in pred:
                raise InvalidAnthropometrics(f"regression predictor {name!r} for {seg} is not available")
            inertia += c * pred[name]
        out.append(SegmentParams(mass=mass, length=anthro["segment_lengths"][seg],
                                 com_ratio=ratio, inertia_com=max(inertia, 0.0)))
    return tuple(out)
