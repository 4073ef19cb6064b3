import json
import math

import numpy as np
import pytest

from emgpinn import autodiff as ad
from emgpinn import network
from emgpinn.errors import ShapeMismatch
from emgpinn.network import Architecture, MlpParams, NormSpec


def test_default_parameter_count():
    # 5*75+75 + 3*(75*75+75) + 75*2+2
    assert 5 * 75 + 75 + 3 * (75 * 75 + 75) + 75 * 2 + 2 == 17702
    assert Architecture().n_params == 17702


def test_canonical_order_and_shapes():
    arch = Architecture(hidden_layers=2, hidden_width=3)
    flat = np.arange(arch.n_params, dtype=float)
    p = MlpParams.from_flat(arch, flat)
    w1, b1 = p.layers[0]
    np.testing.assert_array_equal(w1, np.arange(15).reshape(3, 5))
    np.testing.assert_array_equal(b1, [15, 16, 17])
    assert [t.shape for t in p.tensors()] == [(3, 5), (3,), (3, 3), (3,), (2, 3), (2,)]
    np.testing.assert_array_equal(p.flat, flat)


def test_from_flat_wrong_size():
    with pytest.raises(ShapeMismatch):
        MlpParams.from_flat(Architecture(), np.zeros(10))


def test_init_deterministic_and_bounded():
    arch = Architecture()
    a, b, c = network.init(arch, 1), network.init(arch, 1), network.init(arch, 2)
    np.testing.assert_array_equal(a.flat, b.flat)
    assert not np.array_equal(a.flat, c.flat)
    for w, bias in a.layers:
        n_out, n_in = w.shape
        assert np.max(np.abs(w)) <= math.sqrt(6 / (n_in + n_out))
        assert np.all(bias == 0)


def test_zero_params_give_half():
    arch = Architecture()
    p = MlpParams.from_flat(arch, np.zeros(arch.n_params))
    np.testing.assert_array_equal(network.forward(p, np.ones(5)), [0.5, 0.5])


def test_output_bounds(rng):
    arch = Architecture(hidden_layers=2, hidden_width=8)
    for _ in range(100):
        p = MlpParams.from_flat(arch, rng.normal(0, 3, arch.n_params))
        y = network.forward(p, rng.normal(0, 5, (100, 5)))
        assert np.all((y >= 0) & (y <= 1))


def test_single_neuron_hand_computed():
    arch = Architecture(input_dim=1, hidden_layers=1, hidden_width=1, output_dim=1)
    w1, b1, w2, b2 = 0.7, -0.2, 1.3, 0.4
    p = MlpParams.from_flat(arch, [w1, b1, w2, b2])
    x = 0.9
    expected = 1 / (1 + math.exp(-(w2 * math.tanh(w1 * x + b1) + b2)))
    assert network.forward(p, np.array([x]))[0] == pytest.approx(expected, rel=1e-15)


def test_input_width_checked():
    p = network.init(Architecture(), 0)
    with pytest.raises(ShapeMismatch):
        network.forward(p, np.ones(4))


@pytest.mark.parametrize("method,tol1,tol2", [("exact", 1e-7, 1e-4), ("stencil", 1e-5, 1e-3)])
def test_time_jet_against_time_differences(rng, method, tol1, tol2):
    p = network.init(Architecture(hidden_layers=3, hidden_width=10), 3)
    X = rng.uniform(0, 1, (20, 5))
    y, dy, ddy = network.time_jet(p, X, method)
    h = 1e-4

    def at(dt):
        Z = X.copy()
        Z[:, -1] += dt
        return network.forward(p, Z)

    np.testing.assert_allclose(y, at(0), atol=1e-15)
    np.testing.assert_allclose(dy, (at(h) - at(-h)) / (2 * h), atol=tol1)
    np.testing.assert_allclose(ddy, (at(h) - 2 * at(0) + at(-h)) / h ** 2, atol=tol2)


def test_time_jet_traced_matches_untraced(rng):
    p = network.init(Architecture(hidden_layers=2, hidden_width=6), 0)
    X = rng.uniform(0, 1, (4, 5))
    plain = network.time_jet(p, X)
    traced = network.time_jet(p.with_tensors([ad.Var(t) for t in p.tensors()]), X)
    for a, b in zip(plain, traced):
        np.testing.assert_array_equal(a, b.value)


def test_denormalize_affine():
    spec = NormSpec(angle_offset=(0.0, 0.0), angle_scale=(2.0, 2.0))
    np.testing.assert_allclose(spec.denormalize([0.5, 0.5]), [1.0, 1.0])


def test_norm_roundtrip(rng):
    spec = NormSpec(angle_offset=(-0.3, 0.1), angle_scale=(0.7, 2.1))
    q = rng.normal(size=(30, 2))
    np.testing.assert_allclose(spec.denormalize(spec.normalize(q)), q, atol=1e-14)


def test_norm_from_angles_maps_to_unit(rng):
    q = rng.normal(size=(200, 2)) * [0.2, 1.0] + [0.1, 1.2]
    spec = NormSpec.from_angles(q)
    y = spec.normalize(q)
    np.testing.assert_allclose(y.min(axis=0), 0.0, atol=1e-15)
    np.testing.assert_allclose(y.max(axis=0), 1.0, atol=1e-15)


def test_norm_rejects_bad_scale():
    with pytest.raises(ValueError):
        NormSpec(angle_scale=(0.0, 1.0))


def test_checkpoint_roundtrip(tmp_path):
    arch = Architecture(hidden_layers=2, hidden_width=5)
    p = network.init(arch, 9)
    spec = NormSpec(angle_offset=(0.1, 0.2), angle_scale=(1.5, 2.5))
    path = network.save_checkpoint(tmp_path / "ck.json", p, spec, {"a": 1}, {"mode": "pinn"})
    q, s2, doc = network.load_checkpoint(path)
    np.testing.assert_array_equal(q.flat, p.flat)
    assert s2 == spec and q.arch == arch
    assert doc["meta"]["mode"] == "pinn"
    assert doc["config_hash"] == network.config_hash({"a": 1})


def test_checkpoint_rejects_other_json(tmp_path):
    path = tmp_path / "x.json"
    path.write_text(json.dumps({"hello": 1}))
    with pytest.raises(ValueError):
        network.load_checkpoint(path)
