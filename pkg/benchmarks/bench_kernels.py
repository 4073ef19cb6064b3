"""Time the dynamics kernels on each available backend.

    python benchmarks/bench_kernels.py [--repeat 5]

The numba backend is compiled before timing starts.
"""
import argparse
import timeit

import numpy as np

from emgpinn import _accel, dynamics
from emgpinn.dynamics import LimbModel, SegmentParams

MODEL = LimbModel(SegmentParams(2.07, 0.31, 0.436, 0.0206), SegmentParams(1.18, 0.25, 0.43, 0.0068),
                  hand_load=2.0)


def cases(backend):
    rng = np.random.default_rng(0)
    q, qd, qdd = (rng.uniform(-2, 2, (10_000, 2)) for _ in range(3))
    tau = dynamics.inverse_dynamics(MODEL, q, qd, qdd, backend=backend)
    return {
        "inverse_dynamics x10k": lambda: dynamics.inverse_dynamics(MODEL, q, qd, qdd, backend=backend),
        "forward_dynamics x10k": lambda: dynamics.forward_dynamics(MODEL, q, qd, tau, backend=backend),
        "simulate 1 s @ 1e-4": lambda: dynamics.simulate(MODEL, [0.3, 0.8], [0.0, 0.0], None, 1e-4, 1.0,
                                                         backend=backend),
        "single-state roundtrip x1k": lambda: [dynamics.forward_dynamics(
            MODEL, q[i], qd[i], dynamics.inverse_dynamics(MODEL, q[i], qd[i], qdd[i], backend=backend),
            backend=backend) for i in range(1000)],
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    timings = {}
    for backend in sorted(_accel.BACKENDS):
        for name, fn in cases(backend).items():
            fn()  # warm-up / JIT
            timings[(name, backend)] = min(timeit.repeat(fn, number=1, repeat=args.repeat))

    names = list(cases("numpy"))
    backends = sorted(_accel.BACKENDS)
    print(f"{'case':<28}" + "".join(f"{b:>12}" for b in backends) + ("     speedup" if len(backends) > 1 else ""))
    for name in names:
        row = f"{name:<28}" + "".join(f"{timings[(name, b)] * 1e3:>10.2f}ms" for b in backends)
        if "numba" in backends:
            row += f"{timings[(name, 'numpy')] / timings[(name, 'numba')]:>11.1f}x"
        print(row)
    if "numba" not in backends:
        print("numba not importable; only the numpy backend was timed")


if __name__ == "__main__":
    main()
