import numpy as np
import pytest
from hypothesis import settings

from emgpinn import _accel
from emgpinn.dynamics import LimbModel, SegmentParams

# fixed example generation so every run sees the same cases
settings.register_profile("repro", derandomize=True)
settings.load_profile("repro")


@pytest.fixture(params=sorted(_accel.BACKENDS))
def backend(request):
    return request.param


@pytest.fixture
def point_mass_model():
    # unit masses at the distal ends of unit links, no rotational inertia
    seg = SegmentParams(mass=1.0, length=1.0, com_ratio=1.0, inertia_com=0.0)
    return LimbModel(seg, seg, hand_load=0.0, gravity=9.81)


@pytest.fixture
def arm_model():
    return LimbModel(SegmentParams(2.07, 0.31, 0.436, 0.0206),
                     SegmentParams(1.18, 0.25, 0.43, 0.0068))


def random_model(rng, gravity=9.81):
    ua = SegmentParams(rng.uniform(0.5, 4.0), rng.uniform(0.2, 0.5), rng.uniform(0.2, 1.0),
                       rng.uniform(0.0, 0.05))
    fa = SegmentParams(rng.uniform(0.3, 3.0), rng.uniform(0.15, 0.45), rng.uniform(0.2, 1.0),
                       rng.uniform(0.0, 0.03))
    return LimbModel(ua, fa, hand_load=rng.uniform(0.0, 5.0), gravity=gravity)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def simulated_trial(model, load=0.0, traj_cfg=None, fine_dt=1e-3):
    """Drive ``simulate`` with the computed torque of a min-jerk motion.

    Returns the 125 Hz trial (angles only) and the driving torque at its rows.
    """
    from emgpinn import data, dynamics

    cfg = traj_cfg or data.TrajectoryConfig()
    ref = data.synth_trajectory(cfg)
    loaded = model.with_load(load)

    def motion(t):
        t = np.atleast_1d(t)
        cols = [data.piecewise_min_jerk(t, ref.waypoints[k]) for k in ("shoulder", "elbow")]
        return [np.column_stack([cols[0][i], cols[1][i]]) for i in range(3)]

    def tau_fn(t):
        q, qd, qdd = motion(t)
        return dynamics.inverse_dynamics(loaded, q, qd, qdd)[0]

    duration = ref.t[-1]
    tr = dynamics.simulate(loaded, ref.q[0], ref.qd[0], tau_fn, fine_dt, duration)
    step = int(round(1.0 / (cfg.rate * fine_dt)))
    q = tr.q[::step]
    t = tr.t[::step]
    trial = data.Trial(t, np.zeros((len(t), 4)), q, load_kg=load, rate=cfg.rate)
    tau = np.array([tau_fn(x) for x in t])
    return trial, tau
