import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emgpinn import autodiff as ad
from emgpinn import gradcheck
from emgpinn.errors import NonFiniteLoss


def test_scalar_chain_hand_derivative():
    # f(x) = sin(x)^2 * x  ->  f' = 2 sin cos x + sin^2
    x = np.array(0.7)
    v, g = ad.value_and_grad(lambda p: ad.sum(ad.square(ad.sin(p)) * p), x)
    assert v == pytest.approx(np.sin(0.7) ** 2 * 0.7)
    assert g[0] == pytest.approx(2 * np.sin(0.7) * np.cos(0.7) * 0.7 + np.sin(0.7) ** 2, rel=1e-14)


def test_matmul_gradient_closed_form(rng):
    A = rng.normal(size=(4, 3))
    x = rng.normal(size=3)
    # d/dx |A x|^2 = 2 A^T A x
    _, g = ad.value_and_grad(lambda p: ad.sum(ad.square(ad.matmul(A, p))), x)
    np.testing.assert_allclose(g, 2 * A.T @ A @ x, rtol=1e-12)


def test_fan_out_accumulates():
    x = np.array([3.0])
    _, g = ad.value_and_grad(lambda p: ad.sum(p * p + p * 2.0 + p), x)
    assert g[0] == pytest.approx(2 * 3 + 3)


def test_broadcast_add_unbroadcasts(rng):
    b = rng.normal(size=4)
    X = rng.normal(size=(5, 4))
    _, g = ad.value_and_grad(lambda p: ad.sum(ad.square(X + p)), b)
    np.testing.assert_allclose(g, 2 * (X + b).sum(axis=0), rtol=1e-12)


def test_ndarray_left_operand_defers_to_var(rng):
    A = rng.normal(size=(2, 3))
    v = ad.Var(rng.normal(size=(3, 2)))
    assert isinstance(A @ v, ad.Var)
    assert isinstance(np.ones(2) - ad.Var(np.ones(2)), ad.Var)


def test_constants_are_not_traced():
    out = ad.tanh(np.array([0.1, 0.2]))
    assert isinstance(out, np.ndarray)


def test_nonfinite_loss_raises():
    with np.errstate(divide="ignore"), pytest.raises(NonFiniteLoss):
        ad.value_and_grad(lambda p: ad.sum(p / 0.0), np.array([1.0]))


def test_nonscalar_loss_rejected():
    with pytest.raises(ValueError):
        ad.value_and_grad(lambda p: p * 2.0, np.ones(3))


def test_unused_leaf_gets_zero():
    x = np.ones(3)
    _, g = ad.value_and_grad(lambda p: ad.sum(np.ones(3)) * 1.0 + 0.0 * ad.sum(p), x)
    np.testing.assert_array_equal(g, 0.0)


def test_vector_cotangent_gives_vjp(rng):
    x = ad.Var(rng.normal(size=3))
    u = rng.normal(size=3)
    (g,) = ad.backward(ad.sin(x), [x], cotangent=u)
    np.testing.assert_allclose(g, u * np.cos(x.value), rtol=1e-14)


@pytest.mark.parametrize("name", ad.PRIMITIVES)
def test_primitive_vjp_matches_finite_differences(name):
    rng = np.random.default_rng(7)
    case = gradcheck._primitive_cases()[name]
    assert gradcheck.primitive_error(rng, *case) < 1e-7


@pytest.mark.parametrize("name", ad.PRIMITIVES)
def test_injected_fault_is_detected(name):
    rng = np.random.default_rng(7)
    with ad.inject_fault(name, 1.5):
        err = gradcheck.primitive_error(rng, *gradcheck._primitive_cases()[name])
    assert err > 0.1


def test_inject_fault_unknown():
    with pytest.raises(ValueError):
        with ad.inject_fault("exp"):
            pass


def test_fault_is_removed_after_context():
    rng = np.random.default_rng(1)
    with ad.inject_fault("tanh"):
        pass
    assert gradcheck.primitive_error(rng, *gradcheck._primitive_cases()["tanh"]) < 1e-7


# --- time jets -----------------------------------------------------------------

def _chain(t, traced):
    """A scalar time function built from the jet rules: sigmoid(2 tanh(3t - 1) + t)."""
    z = 3.0 * t - 1.0
    if traced:
        a, da, dda = ad.tanh_jet(z, 3.0, None)
        return ad.sigmoid_jet(2.0 * a + t, 2.0 * da + 1.0, 2.0 * dda)
    return 1.0 / (1.0 + np.exp(-(2.0 * np.tanh(z) + t)))


@settings(max_examples=40, deadline=None)
@given(st.floats(-2, 2))
def test_jets_match_time_finite_differences(t):
    y, dy, ddy = _chain(np.array(t), True)
    # five-point differences: truncation O(h^4), so derivative spikes near t = 1/3 stay resolved
    h = 1e-3
    fm2, fm1, f0, fp1, fp2 = (float(_chain(np.array(t + k * h), False)) for k in (-2, -1, 0, 1, 2))
    assert float(y) == pytest.approx(f0, abs=1e-14)
    assert float(dy) == pytest.approx((fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * h), abs=1e-8)
    assert float(ddy) == pytest.approx((-fm2 + 16 * fm1 - 30 * f0 + 16 * fp1 - fp2) / (12 * h * h), abs=1e-6)


def test_stencil_jet_exact_for_quadratic():
    _, d1, d2 = ad.stencil_jet(lambda t: 3 * t ** 2 + 2 * t, np.array(1.5), 1e-2)
    assert d1 == pytest.approx(11.0, abs=1e-10)
    assert d2 == pytest.approx(6.0, abs=1e-8)


# --- helpers -------------------------------------------------------------------

def test_check_grad_on_known_function():
    g = ad.check_grad(lambda x: np.sum(x ** 3), np.array([1.0, -2.0]))
    np.testing.assert_allclose(g, [3.0, 12.0], rtol=1e-8)


def test_check_grad_five_point_more_accurate():
    f = lambda x: np.sum(np.sin(3 * x))  # noqa: E731
    x = np.array([0.2, 1.1])
    exact = 3 * np.cos(3 * x)
    err2 = np.max(np.abs(ad.check_grad(f, x, 1e-2) - exact))
    err4 = np.max(np.abs(ad.check_grad(f, x, 1e-2, order=4) - exact))
    assert err4 < 1e-6 < err2
    with pytest.raises(ValueError):
        ad.check_grad(f, x, order=3)


def test_relative_error_floor():
    assert ad.relative_error(0.0, 0.0) == 0.0
    assert ad.relative_error(1.0, 1.1) == pytest.approx(0.1 / 1.1)


def test_gradcheck_run_passes():
    errors, failed = gradcheck.run(seed=3, draws=1)
    assert failed == []
    assert set(ad.PRIMITIVES) <= set(errors)
    assert {"dynamics_residual", "time_jet_exact", "total_loss_exact"} <= set(errors)
