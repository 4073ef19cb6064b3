"""Finite-difference verification of every differentiable primitive and the full loss."""
import numpy as np

from . import autodiff as ad
from . import dynamics, network, training

TOLERANCE = 1e-4


def max_rel_error(analytic, numeric, floor=1e-7):
    """Largest elementwise relative error, denominators floored at ``floor * max|numeric|``."""
    a, b = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    scale = max(float(np.max(np.abs(b), initial=0.0)), 1e-12)
    return float(np.max(ad.relative_error(a, b, floor=floor * scale), initial=0.0))


def _check(fn, x, h=1e-5):
    _, g = ad.value_and_grad(fn, x)
    return max_rel_error(g, ad.check_grad(fn, x, h))


def _primitive_cases():
    """Per primitive: the function and its random inputs (all differentiated)."""
    return {
        "add": (ad.add, [(3, 4), (4,)]),
        "neg": (ad.neg, [(3, 4)]),
        "mul": (ad.mul, [(3, 4), (3, 1)]),
        "div": (ad.div, [(3, 4), (3, 4)], 0.5),
        "matmul": (ad.matmul, [(3, 4), (4, 2)]),
        "transpose": (ad.transpose, [(3, 4)]),
        "column": (lambda a: ad.column(a, 1), [(3, 4)]),
        "take_rows": (lambda a: ad.take_rows(a, [2, 0, 2]), [(3, 4)]),
        "square": (ad.square, [(3, 4)]),
        "tanh": (ad.tanh, [(3, 4)]),
        "sigmoid": (ad.sigmoid, [(3, 4)]),
        "sin": (ad.sin, [(3, 4)]),
        "cos": (ad.cos, [(3, 4)]),
        "sum": (lambda a: ad.sum(a, axis=0), [(3, 4)]),
    }


def primitive_error(rng, fn, shapes, shift=None):
    """Vector-Jacobian product of one primitive against central differences.

    Every input is traced and a random output cotangent ``u`` is pulled back,
    so only the primitive's own derivative rule is exercised.
    """
    xs = [rng.normal(size=s) for s in shapes]
    if shift is not None:
        # keep denominators away from zero
        xs[-1] = np.sign(xs[-1]) * shift + xs[-1]
    leaves = [ad.Var(x) for x in xs]
    out = fn(*leaves)
    u = rng.normal(size=np.shape(ad.value_of(out)))
    grads = ad.backward(out, leaves, cotangent=u)
    worst = 0.0
    for i, x in enumerate(xs):
        def f(v, i=i):
            args = list(xs)
            args[i] = v.reshape(x.shape)
            return float(np.sum(u * ad.value_of(fn(*args))))
        num = ad.check_grad(f, x.reshape(-1))
        worst = max(worst, max_rel_error(grads[i].reshape(-1), num))
    return worst


def small_problem(rng, arch=network.Architecture(hidden_layers=2, hidden_width=6), n=12):
    """A tiny network, batch and limb for exercising the full loss."""
    params = network.init(arch, int(rng.integers(2**31)))
    params = network.MlpParams.from_flat(arch, params.flat + rng.normal(0, 0.3, arch.n_params))
    X = np.column_stack([rng.uniform(0, 1, (n, 4)), rng.uniform(0, 1, n)])
    load = rng.choice([0.0, 2.0], size=n)
    batch = training.Samples(X, rng.uniform(0, 1, (n, 2)), rng.normal(0, 2, (n, 2)),
                             rng.uniform(2.0, 4.0, n), load)
    ua = dynamics.SegmentParams(rng.uniform(1.5, 2.5), 0.3, 0.44, rng.uniform(0.01, 0.03))
    fa = dynamics.SegmentParams(rng.uniform(0.8, 1.5), 0.25, 0.43, rng.uniform(0.004, 0.01))
    model = dynamics.LimbModel(ua, fa)
    norm = network.NormSpec(angle_offset=(-0.1, 0.1), angle_scale=(0.6, 2.0))
    return params, batch, model, norm


def _fd(method):
    """Finite-difference step and order for a jet method.

    The stencil jet divides by its own time step squared, which magnifies
    rounding, so it gets a wider five-point difference.
    """
    return (2e-3, 4) if method == "stencil" else (1e-5, 2)


def loss_error(rng, method="exact", alpha=None):
    params, batch, model, norm = small_problem(rng)
    alpha = float(rng.uniform(0.5, 5.0)) if alpha is None else alpha
    scale = model.characteristic_torque()

    def fn(p):
        if isinstance(p, np.ndarray):
            p = network.MlpParams.from_flat(params.arch, p)
        return training.total_loss(p, batch, model, norm, alpha, scale, method)[0]

    _, g = ad.value_and_grad(fn, params)
    return max_rel_error(g, ad.check_grad(fn, params.flat, *_fd(method)))


def composite_cases(rng):
    """Dynamics residual and time-jet checks on top of the primitives."""
    params, batch, model, norm = small_problem(rng)
    q0 = rng.normal(size=(6, 2))
    tau = rng.normal(size=(6, 2))

    def residual(x):
        q, qd, qdd = (_cols(x, k) for k in range(3))
        f1, f2 = training.physics_residual(model, q, qd, qdd, tau)
        return ad.sum(ad.square(f1) + ad.square(f2))

    def jet(method):
        def fn(p):
            if isinstance(p, np.ndarray):
                p = network.MlpParams.from_flat(params.arch, p)
            y, dy, ddy = network.time_jet(p, batch.X, method)
            return ad.sum(ad.square(y) + ad.square(dy) + 0.1 * ad.square(ddy))
        return fn

    x = np.concatenate([q0.ravel(), rng.normal(size=12), rng.normal(size=12)])
    out = {"dynamics_residual": _check(residual, x)}
    for method in ("exact", "stencil"):
        fn = jet(method)
        _, g = ad.value_and_grad(fn, params)
        out[f"time_jet_{method}"] = max_rel_error(g, ad.check_grad(fn, params.flat, *_fd(method)))
    return out


def _cols(x, k):
    """Rows 6k..6k+5 of flat ``x`` as a (6, 2) block."""
    xv = ad.value_of(x)
    blk = xv[12 * k:12 * (k + 1)].reshape(6, 2)
    if not isinstance(x, ad.Var):
        return blk

    def vjp(g, k=k, n=xv.size):
        out = np.zeros(n)
        out[12 * k:12 * (k + 1)] = g.reshape(-1)
        return out

    return ad._node(blk, "slice", [(x, vjp)])


def run(seed=0, draws=3, tol=TOLERANCE):
    """Return ``{name: max relative error}`` and the list of failing names."""
    rng = np.random.default_rng(seed)
    errors = {}
    for _ in range(draws):
        for name, case in _primitive_cases().items():
            errors[name] = max(errors.get(name, 0.0), primitive_error(rng, *case))
        for name, e in composite_cases(rng).items():
            errors[name] = max(errors.get(name, 0.0), e)
        for method in ("exact", "stencil"):
            key = f"total_loss_{method}"
            errors[key] = max(errors.get(key, 0.0), loss_error(rng, method))
    failed = [k for k, v in errors.items() if not v < tol]
    return errors, failed
