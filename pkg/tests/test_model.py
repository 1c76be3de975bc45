import math

import numpy as np
import pytest

from fedstop.errors import ConfigError, DimensionError, NumericError
from fedstop.model import (Batch, ModelSpec, evaluate, init_params, loss_and_grad, param_dim,
                           unflatten)

from conftest import random_batch

LOGREG = ModelSpec("logreg", input_dim=4, num_classes=3)
MLP = ModelSpec("mlp", input_dim=4, num_classes=3, hidden_dim=8)


def central_difference(f, x, i, h=1e-5):
    e = np.zeros_like(x)
    e[i] = h
    return (f(x + e) - f(x - e)) / (2 * h)


def test_param_dims():
    assert param_dim(LOGREG) == 15
    assert param_dim(MLP) == 67
    assert init_params(LOGREG, 0).shape == (15,)
    assert init_params(MLP, 0).shape == (67,)


def test_init_is_deterministic_and_scaled():
    a, b = init_params(MLP, 7), init_params(MLP, 7)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, init_params(MLP, 8))
    (W1, b1), (W2, b2) = unflatten(MLP, a)
    assert np.all(np.abs(W1) <= 1 / math.sqrt(4)) and np.all(np.abs(W2) <= 1 / math.sqrt(8))
    assert not b1.any() and not b2.any()


def test_invalid_specs():
    with pytest.raises(ConfigError):
        ModelSpec("cnn", 4, 3)
    with pytest.raises(ConfigError):
        ModelSpec("logreg", 4, 1)
    with pytest.raises(ConfigError):
        ModelSpec("mlp", 4, 3, hidden_dim=0)


def test_zero_params_give_log_k_loss():
    for k in (2, 3, 5):
        spec = ModelSpec("logreg", 3, k)
        X = np.random.default_rng(0).standard_normal((2 * k, 3))
        y = np.tile(np.arange(k), 2)
        loss, _ = loss_and_grad(spec, np.zeros(param_dim(spec)), Batch(X, y))
        assert loss == pytest.approx(math.log(k), rel=1e-15)


@pytest.mark.parametrize("spec", [LOGREG, MLP], ids=["logreg", "mlp"])
def test_gradient_matches_finite_differences(spec, rng):
    params = rng.standard_normal(param_dim(spec))
    batch = random_batch(rng, spec, 20)
    _, grad = loss_and_grad(spec, params, batch)
    f = lambda p: loss_and_grad(spec, p, batch)[0]
    for i in rng.choice(param_dim(spec), size=10, replace=False):
        fd = central_difference(f, params, i)
        assert abs(grad[i] - fd) <= 1e-6 * max(abs(fd), 1e-3)


def test_logreg_single_sample_closed_form(rng):
    spec = LOGREG
    params = rng.standard_normal(param_dim(spec))
    x = rng.standard_normal(4)
    label = 2
    W = params[:12].reshape(3, 4)
    b = params[12:]
    z = W @ x + b
    p = np.exp(z - z.max())
    p /= p.sum()
    y = np.eye(3)[label]
    outer = np.outer(p - y, np.append(x, 1.0))  # columns: weights..., bias
    expected = np.concatenate([outer[:, :4].ravel(), outer[:, 4]])
    _, grad = loss_and_grad(spec, params, Batch(x[None, :], np.array([label])))
    np.testing.assert_allclose(grad, expected, rtol=1e-12, atol=1e-15)


def test_loss_is_permutation_invariant(rng):
    params = rng.standard_normal(param_dim(MLP))
    batch = random_batch(rng, MLP, 30)
    perm = rng.permutation(30)
    l1, _ = loss_and_grad(MLP, params, batch)
    l2, _ = loss_and_grad(MLP, params, Batch(batch.features[perm], batch.labels[perm]))
    assert l1 == pytest.approx(l2, rel=1e-14)


def test_evaluate_shares_loss_with_training_path(rng):
    for spec in (LOGREG, MLP):
        params = rng.standard_normal(param_dim(spec))
        batch = random_batch(rng, spec, 25)
        assert evaluate(spec, params, batch)[0] == loss_and_grad(spec, params, batch)[0]


def test_tie_break_picks_lowest_class():
    spec = ModelSpec("logreg", 2, 2)
    X = np.random.default_rng(1).standard_normal((10, 2))
    y = np.array([0, 1, 1, 0, 1, 1, 1, 0, 1, 1])
    _, acc = evaluate(spec, np.zeros(param_dim(spec)), Batch(X, y))
    assert acc == pytest.approx(np.mean(y == 0))


def test_separable_set_perfect_accuracy():
    # class k sits at +-5 on axis 0; W picks the sign of x0
    spec = ModelSpec("logreg", 2, 2)
    X = np.array([[-5.0, 1.0], [-4.0, -2.0], [4.0, 0.5], [6.0, -1.0]])
    y = np.array([0, 0, 1, 1])
    params = np.array([-1.0, 0.0, 1.0, 0.0, 0.0, 0.0])
    assert evaluate(spec, params, Batch(X, y))[1] == 1.0


def test_single_sample_accuracy_is_binary(rng):
    params = rng.standard_normal(param_dim(MLP))
    for _ in range(5):
        acc = evaluate(MLP, params, random_batch(rng, MLP, 1))[1]
        assert acc in (0.0, 1.0)


def test_extreme_logits_stay_finite():
    spec = ModelSpec("logreg", 1, 2)
    params = np.array([1e300, -1e300, 0.0, 0.0])
    loss, grad = loss_and_grad(spec, params, Batch(np.array([[1.0]]), np.array([0])))
    assert loss == 0.0 and np.all(np.isfinite(grad))


def test_non_finite_params_raise():
    spec = ModelSpec("logreg", 1, 2)
    with pytest.raises(NumericError):
        loss_and_grad(spec, np.array([np.inf, 0.0, 0.0, 0.0]), Batch(np.array([[1.0]]), np.array([0])))


def test_shape_errors():
    with pytest.raises(DimensionError):
        loss_and_grad(LOGREG, np.zeros(14), Batch(np.zeros((1, 4)), np.array([0])))
    with pytest.raises(DimensionError):
        loss_and_grad(LOGREG, np.zeros(15), Batch(np.zeros((1, 5)), np.array([0])))
