import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from grip import model as mdl
from grip.losses import ce_loss

import gradcheck


def test_zero_linear_model_is_uniform():
    p = mdl.ClassifierParams("linear", {"W": np.zeros((4, 3)), "b": np.zeros(4)})
    out = mdl.forward(p, np.random.default_rng(0).standard_normal((5, 3)))
    np.testing.assert_allclose(out.probs, 0.25)


def test_softmax_hand_values():
    np.testing.assert_allclose(mdl.softmax(np.array([[0.0, 0.0, np.log(3.0)]])), [[0.2, 0.2, 0.6]], atol=1e-15)


@given(
    arrays(np.float64, (3, 5), elements=st.floats(-50, 50)),
    st.floats(-1e3, 1e3),
)
def test_softmax_shift_invariance(z, k):
    np.testing.assert_allclose(mdl.softmax(z + k), mdl.softmax(z), atol=1e-12)


def test_softmax_large_logits_stable():
    z = np.random.default_rng(1).uniform(-1e4, 1e4, size=(100, 10))
    p = mdl.softmax(z)
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-9)


def test_forward_shape_error_and_relu():
    p = mdl.init_params("mlp1", 3, 2, hidden=4, rng=0)
    with pytest.raises(mdl.ShapeError):
        mdl.forward(p, np.zeros((2, 5)))
    out = mdl.forward(p, np.ones((2, 3)))
    assert out.hidden.min() >= 0


def test_forward_deterministic():
    p = mdl.init_params("mlp1", 6, 4, rng=3)
    x = np.random.default_rng(2).standard_normal((50, 6))
    assert mdl.forward(p, x).probs.tobytes() == mdl.forward(p, x).probs.tobytes()


def test_init_glorot_bounds():
    p = mdl.init_params("mlp1", 8, 10, hidden=64, rng=0)
    a = np.sqrt(6 / (8 + 64))
    assert np.abs(p.weights["W1"]).max() <= a
    assert p.weights["W1"].shape == (64, 8) and p.weights["W2"].shape == (10, 64)
    np.testing.assert_array_equal(p.weights["b1"], 0)
    q = mdl.init_params("mlp1", 8, 10, hidden=64, rng=0)
    np.testing.assert_array_equal(p.weights["W2"], q.weights["W2"])


@pytest.mark.parametrize("arch", ["linear", "mlp1"])
def test_backward_zero_upstream(arch):
    params, x, _, _ = gradcheck.random_instance(0, arch)
    grads = mdl.backward(params, x, np.zeros((x.shape[0], 3)))
    assert all(np.all(g == 0) for g in grads.values())


@pytest.mark.parametrize("arch", ["linear", "mlp1"])
@pytest.mark.parametrize("kind", ["ce", "soft", "me", "gr"])
def test_backward_matches_finite_differences(arch, kind):
    for seed in range(20):
        assert gradcheck.check(seed, arch, kind) < 1e-5


@pytest.mark.parametrize("arch", ["linear", "mlp1"])
def test_duplicated_batch_same_mean_gradient(arch):
    params, x, labels, _ = gradcheck.random_instance(4, arch)
    out = mdl.forward(params, x)
    g1 = mdl.backward(params, x, ce_loss(out.probs, labels)[1])
    x2, y2 = np.concatenate([x, x]), np.concatenate([labels, labels])
    out2 = mdl.forward(params, x2)
    g2 = mdl.backward(params, x2, ce_loss(out2.probs, y2)[1])
    for k in g1:
        np.testing.assert_allclose(g2[k], g1[k], atol=1e-12)


def test_backward_shape_error():
    params, x, _, _ = gradcheck.random_instance(0, "linear")
    with pytest.raises(mdl.ShapeError):
        mdl.backward(params, x, np.zeros((x.shape[0], 7)))


def _params():
    return mdl.init_params("linear", 3, 2, rng=1)


def _grads(p, value=1.0):
    return {k: np.full_like(v, value) for k, v in p.weights.items()}


def test_sgd_zero_lr_no_change():
    p = _params()
    q, _ = mdl.sgd_step(p, _grads(p), mdl.OptimizerState(0.0, 0.9, 0.1))
    for k in p.weights:
        np.testing.assert_array_equal(q.weights[k], p.weights[k])


def test_sgd_vanilla():
    p = _params()
    g = {k: np.random.default_rng(0).standard_normal(v.shape) for k, v in p.weights.items()}
    q, _ = mdl.sgd_step(p, g, mdl.OptimizerState(0.1))
    for k in p.weights:
        np.testing.assert_array_equal(q.weights[k], p.weights[k] - 0.1 * g[k])


def test_sgd_momentum_two_steps():
    p = _params()
    g = _grads(p, 0.5)
    state = mdl.OptimizerState(0.1, 0.9)
    q, state = mdl.sgd_step(p, g, state)
    q, state = mdl.sgd_step(q, g, state)
    for k in p.weights:
        np.testing.assert_allclose(p.weights[k] - q.weights[k], 0.1 * 0.5 * (1 + 1.9), atol=1e-15)
        assert state.velocity[k].shape == p.weights[k].shape


def test_sgd_weight_decay():
    p = _params()
    q, _ = mdl.sgd_step(p, _grads(p, 0.0), mdl.OptimizerState(0.5, 0.0, 0.2))
    for k in p.weights:
        np.testing.assert_allclose(q.weights[k], p.weights[k] * (1 - 0.5 * 0.2))


def test_sgd_rejects_non_finite():
    p = _params()
    g = _grads(p)
    g["W"][0, 0] = np.nan
    with pytest.raises(mdl.OptimizerError):
        mdl.sgd_step(p, g, mdl.OptimizerState(0.1))


def test_params_json_round_trip(tmp_path):
    p = mdl.init_params("mlp1", 5, 3, hidden=7, rng=2)
    mdl.save_params(p, tmp_path / "p.json")
    q = mdl.load_params(tmp_path / "p.json")
    assert q.architecture == "mlp1"
    for k in p.weights:
        assert q.weights[k].tobytes() == p.weights[k].tobytes()
    bad = mdl.params_to_dict(p)
    bad["version"] = 99
    with pytest.raises(ValueError):
        mdl.params_from_dict(bad)


def test_predict_ties_lowest_class():
    p = mdl.ClassifierParams("linear", {"W": np.zeros((3, 2)), "b": np.zeros(3)})
    assert mdl.predict_labels(p, np.ones((4, 2))).tolist() == [0, 0, 0, 0]
