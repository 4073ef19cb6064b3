import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emgpinn import dynamics
from emgpinn.dynamics import LimbModel, SegmentParams
from emgpinn.errors import InvalidAnthropometrics, NonFinite, SingularMassMatrix

from conftest import random_model


# --- independent oracle: COM kinematics of the two bodies plus the hand ----

def _bodies(model):
    """(mass, inertia, link index, distance along link) for every body."""
    ua, fa = model.upper_arm, model.forearm
    out = [(ua.mass, ua.inertia_com, 0, ua.com), (fa.mass, fa.inertia_com, 1, fa.com)]
    if model.hand_load > 0:
        out.append((model.hand_load, 0.0, 1, fa.length))
    return out


def _position(model, q, link, d):
    # x forward, y up; q = 0 hangs straight down
    l1 = model.upper_arm.length
    q1, q2 = q
    if link == 0:
        return np.array([d * math.sin(q1), -d * math.cos(q1)])
    return np.array([l1 * math.sin(q1) + d * math.sin(q1 + q2),
                     -l1 * math.cos(q1) - d * math.cos(q1 + q2)])


def _jacobian(model, q, link, d):
    l1 = model.upper_arm.length
    q1, q2 = q
    if link == 0:
        return np.array([[d * math.cos(q1), 0.0], [d * math.sin(q1), 0.0]])
    a = d * math.cos(q1 + q2)
    b = d * math.sin(q1 + q2)
    return np.array([[l1 * math.cos(q1) + a, a], [l1 * math.sin(q1) + b, b]])


def oracle_mass(model, q):
    q = np.asarray(q, dtype=float)
    M = np.zeros((2, 2))
    for m, inertia, link, d in _bodies(model):
        J = _jacobian(model, q, link, d)
        M += m * J.T @ J
        w = np.array([1.0, 0.0]) if link == 0 else np.array([1.0, 1.0])
        M += inertia * np.outer(w, w)
    return M


def oracle_potential(model, q):
    return sum(m * model.gravity * _position(model, np.asarray(q, float), link, d)[1]
               for m, _, link, d in _bodies(model))


def oracle_gravity(model, q, h=1e-6):
    q = np.asarray(q, dtype=float)
    g = np.zeros(2)
    for k in range(2):
        dq = np.zeros(2)
        dq[k] = h
        g[k] = (oracle_potential(model, q + dq) - oracle_potential(model, q - dq)) / (2 * h)
    return g


def oracle_coriolis(model, q, qd, h=1e-5):
    """Christoffel symbols of the oracle mass matrix."""
    q = np.asarray(q, dtype=float)
    dM = []
    for k in range(2):
        dq = np.zeros(2)
        dq[k] = h
        dM.append((oracle_mass(model, q + dq) - oracle_mass(model, q - dq)) / (2 * h))
    c = np.zeros(2)
    for i in range(2):
        for j in range(2):
            for k in range(2):
                c[i] += 0.5 * (dM[k][i, j] + dM[j][i, k] - dM[i][j, k]) * qd[j] * qd[k]
    return c


# --- closed-form examples ----------------------------------------------------

def test_mass_matrix_point_masses_straight(point_mass_model, backend):
    M = dynamics.mass_matrix(point_mass_model, [0.3, 0.0], backend=backend)
    np.testing.assert_allclose(M, [[5, 2], [2, 1]], atol=1e-12)


def test_mass_matrix_point_masses_right_angle(point_mass_model, backend):
    M = dynamics.mass_matrix(point_mass_model, [0.0, math.pi / 2], backend=backend)
    np.testing.assert_allclose(M, [[3, 1], [1, 1]], atol=1e-12)


def test_coriolis_point_masses(point_mass_model, backend):
    c = dynamics.coriolis_vector(point_mass_model, [0.0, math.pi / 2], [1.0, 0.0], backend=backend)
    np.testing.assert_allclose(c, [0.0, 1.0], atol=1e-12)


def test_gravity_hanging_is_zero(arm_model, backend):
    np.testing.assert_allclose(dynamics.gravity_vector(arm_model, [0.0, 0.0], backend=backend), 0, atol=1e-12)


def test_gravity_horizontal_point_masses(point_mass_model):
    # arm straight out: shoulder carries both masses at 1 m and 2 m
    g = dynamics.gravity_vector(point_mass_model, [math.pi / 2, 0.0])
    np.testing.assert_allclose(g, [9.81 * 3, 9.81 * 1], atol=1e-12)
    np.testing.assert_allclose(g, oracle_gravity(point_mass_model, [math.pi / 2, 0.0]), rtol=1e-8)


def test_gravity_zero_field(arm_model, rng):
    m = arm_model.with_gravity(0.0)
    for q in rng.uniform(-3, 3, size=(20, 2)):
        assert np.all(dynamics.gravity_vector(m, q) == 0)


# --- oracle comparisons over random models ------------------------------------

def test_terms_match_lagrangian_oracle(rng, backend):
    for _ in range(25):
        model = random_model(rng)
        q, qd = rng.uniform(-3, 3, 2), rng.uniform(-4, 4, 2)
        np.testing.assert_allclose(dynamics.mass_matrix(model, q, backend=backend),
                                   oracle_mass(model, q), rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(dynamics.gravity_vector(model, q, backend=backend),
                                   oracle_gravity(model, q), rtol=1e-7, atol=1e-8)
        np.testing.assert_allclose(dynamics.coriolis_vector(model, q, qd, backend=backend),
                                   oracle_coriolis(model, q, qd), rtol=1e-5, atol=1e-7)


def test_potential_energy_matches_oracle(rng):
    for _ in range(10):
        model = random_model(rng)
        q = rng.uniform(-3, 3, 2)
        assert dynamics.potential_energy(model, q) == pytest.approx(oracle_potential(model, q), abs=1e-12)


def test_backends_agree(rng):
    from emgpinn import _accel
    if len(_accel.BACKENDS) < 2:
        pytest.skip("only one backend available")
    model = random_model(rng)
    q, qd, qdd = (rng.uniform(-2, 2, (50, 2)) for _ in range(3))
    a = dynamics.inverse_dynamics(model, q, qd, qdd, backend="numpy")
    b = dynamics.inverse_dynamics(model, q, qd, qdd, backend="numba")
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


# --- properties ---------------------------------------------------------------

angles = st.floats(-math.pi, math.pi)
rates = st.floats(-10, 10)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), angles, angles)
def test_mass_matrix_symmetric_positive_definite(seed, q1, q2):
    rng = np.random.default_rng(seed)
    model = random_model(rng)
    M = dynamics.mass_matrix(model, [q1, q2])
    assert M[0, 1] == M[1, 0]
    x = rng.normal(size=2)
    assert x @ M @ x > 0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), angles, angles, rates, rates, st.floats(0.1, 5))
def test_coriolis_quadratic_in_velocity(seed, q1, q2, v1, v2, s):
    model = random_model(np.random.default_rng(seed))
    c1 = dynamics.coriolis_vector(model, [q1, q2], [v1, v2])
    c2 = dynamics.coriolis_vector(model, [q1, q2], [s * v1, s * v2])
    np.testing.assert_allclose(c2, s * s * c1, rtol=1e-10, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31))
def test_roundtrip_inverse_forward(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng)
    q, qd, qdd = rng.uniform(-3, 3, 2), rng.uniform(-5, 5, 2), rng.uniform(-20, 20, 2)
    tau = dynamics.inverse_dynamics(model, q, qd, qdd)
    np.testing.assert_allclose(dynamics.forward_dynamics(model, q, qd, tau), qdd, atol=1e-10)


def test_static_torque_equals_gravity(arm_model, rng):
    q = rng.uniform(-2, 2, (10, 2))
    z = np.zeros_like(q)
    np.testing.assert_allclose(dynamics.inverse_dynamics(arm_model, q, z, z),
                               dynamics.gravity_vector(arm_model, q), atol=1e-14)


def test_batch_matches_single(arm_model, rng):
    q, qd, qdd = (rng.uniform(-2, 2, (7, 2)) for _ in range(3))
    batch = dynamics.inverse_dynamics(arm_model, q, qd, qdd)
    for i in range(7):
        np.testing.assert_allclose(batch[i], dynamics.inverse_dynamics(arm_model, q[i], qd[i], qdd[i]))


def test_bad_shape_rejected(arm_model):
    with pytest.raises(ValueError):
        dynamics.mass_matrix(arm_model, [1.0, 2.0, 3.0])


# --- hand load ------------------------------------------------------------------

def test_hand_load_is_distal_point_mass(rng):
    base = random_model(rng).with_load(0.0)
    loaded = base.with_load(2.5)
    q = rng.uniform(-2, 2, 2)
    np.testing.assert_allclose(dynamics.mass_matrix(loaded, q), oracle_mass(loaded, q), rtol=1e-8)
    np.testing.assert_allclose(dynamics.gravity_vector(loaded, q), oracle_gravity(loaded, q), rtol=1e-7)


def test_load_increases_static_elbow_torque(arm_model):
    q = [0.2, 1.2]
    taus = [dynamics.gravity_vector(arm_model.with_load(kg), q)[1] for kg in (0, 2, 4)]
    assert taus[0] < taus[1] < taus[2]
    # the extra torque is exactly load * g * forearm length * sin(q1 + q2)
    extra = 2 * 9.81 * arm_model.forearm.length * math.sin(sum(q))
    assert taus[1] - taus[0] == pytest.approx(extra, rel=1e-12)


# --- invariants on parameters -------------------------------------------------

@pytest.mark.parametrize("kw", [dict(mass=0), dict(length=-1), dict(com_ratio=0),
                                dict(com_ratio=1.2), dict(inertia_com=-0.1)])
def test_segment_invariants(kw):
    base = dict(mass=1.0, length=0.3, com_ratio=0.5, inertia_com=0.01)
    base.update(kw)
    with pytest.raises(ValueError):
        SegmentParams(**base)


def test_limb_invariants(arm_model):
    with pytest.raises(ValueError):
        arm_model.with_load(-1)
    with pytest.raises(ValueError):
        arm_model.with_gravity(-9.81)


# --- simulation -------------------------------------------------------------------

def test_simulate_zero_gravity_conserves_energy(arm_model, backend):
    m = arm_model.with_gravity(0.0)
    tr = dynamics.simulate(m, [0.3, 0.8], [1.5, -2.0], None, 1e-4, 1.0, backend=backend)
    ke = dynamics.kinetic_energy(m, tr.q, tr.qd)
    assert np.max(np.abs(ke - ke[0])) / ke[0] < 1e-6


def test_simulate_total_energy_with_gravity(arm_model):
    tr = dynamics.simulate(arm_model, [1.0, 0.5], [0.0, 0.0], None, 1e-4, 1.0)
    e = dynamics.kinetic_energy(arm_model, tr.q, tr.qd) + dynamics.potential_energy(arm_model, tr.q)
    assert np.ptp(e) < 1e-8 * arm_model.characteristic_torque()


def test_small_angle_pendulum_period():
    # a negligible forearm leaves a single rigid body swinging about the shoulder
    ua = SegmentParams(2.0, 0.4, 0.5, 0.02)
    fa = SegmentParams(1e-6, 0.02, 1.0, 0.0)
    m = LimbModel(ua, fa)
    tr = dynamics.simulate(m, [0.01, 0.0], [0.0, 0.0], None, 1e-4, 4.0)
    I = ua.inertia_com + ua.mass * ua.com ** 2
    expected = 2 * math.pi * math.sqrt(I / (ua.mass * 9.81 * ua.com))
    q1 = tr.q[:, 0]
    ups = np.flatnonzero((q1[:-1] < 0) & (q1[1:] >= 0))
    t_cross = tr.t[ups] + (0 - q1[ups]) / (q1[ups + 1] - q1[ups]) * (tr.t[1] - tr.t[0])
    period = np.mean(np.diff(t_cross))
    assert abs(period - expected) / expected < 0.01


def test_simulate_computed_torque_tracks(arm_model):
    # driving with inverse-dynamics torque of a known motion reproduces it
    def motion(t):
        return (np.array([0.3 * math.sin(2 * t), 0.8 + 0.5 * math.sin(3 * t)]),
                np.array([0.6 * math.cos(2 * t), 1.5 * math.cos(3 * t)]),
                np.array([-1.2 * math.sin(2 * t), -4.5 * math.sin(3 * t)]))

    def tau(t):
        return dynamics.inverse_dynamics(arm_model, *motion(t))

    q0, qd0, _ = motion(0.0)
    tr = dynamics.simulate(arm_model, q0, qd0, tau, 1e-3, 2.0)
    ref = np.array([motion(t)[0] for t in tr.t])
    assert np.max(np.abs(tr.q - ref)) < 1e-8


def test_simulate_divergence_raises(arm_model):
    with pytest.raises(NonFinite):
        dynamics.simulate(arm_model, [0, 0], [0, 0], lambda t: np.array([1e9, 1e9]), 1e-2, 1.0)


def test_near_singular_mass_matrix_raises():
    tiny = SegmentParams(1e-13, 1e-7, 1.0, 0.0)
    m = LimbModel(SegmentParams(1.0, 0.3, 0.5, 0.01), tiny)
    with pytest.raises(SingularMassMatrix):
        dynamics.forward_dynamics(m, [0, 0], [0, 0], [0, 0])


# --- anthropometric estimation --------------------------------------------------

ANTHRO = {"height": 1.72, "weight": 74.0, "segment_lengths": {"upper_arm": 0.31, "forearm": 0.25},
          "circumferences": {"arm": 0.30, "biceps": 0.32, "forearm": 0.27, "wrist": 0.17}}
COEFFS = {"mass_fraction": {"upper_arm": 0.028, "forearm": 0.016},
          "com_ratio": {"upper_arm": 0.436, "forearm": 0.43},
          "inertia": {"upper_arm": {"intercept": 0.0, "terms": {"mass_length_sq": 0.1}},
                      "forearm": {"intercept": 0.001, "terms": {"circ_wrist": 0.01}}}}


def test_estimate_segment_params_hand_values():
    ua, fa = dynamics.estimate_segment_params(ANTHRO, COEFFS)
    assert ua.mass == pytest.approx(0.028 * 74)
    assert ua.com == pytest.approx(0.436 * 0.31)
    assert ua.inertia_com == pytest.approx(0.1 * 0.028 * 74 * 0.31 ** 2)
    assert fa.inertia_com == pytest.approx(0.001 + 0.01 * 0.17)


def test_estimate_rejects_nonpositive():
    bad = {**ANTHRO, "weight": 0.0}
    with pytest.raises(InvalidAnthropometrics):
        dynamics.estimate_segment_params(bad, COEFFS)


def test_estimate_unknown_predictor():
    coeffs = {**COEFFS, "inertia": {**COEFFS["inertia"], "forearm": {"terms": {"circ_ankle": 1.0}}}}
    with pytest.raises(InvalidAnthropometrics):
        dynamics.estimate_segment_params(ANTHRO, coeffs)


def test_estimate_clamps_negative_inertia():
    coeffs = {**COEFFS, "inertia": {**COEFFS["inertia"], "upper_arm": {"intercept": -5.0}}}
    ua, _ = dynamics.estimate_segment_params(ANTHRO, coeffs)
    assert ua.inertia_com == 0.0
