"""Tiny autoencoder: gradient correctness, init ranges, training basics."""

import numpy as np
import pytest

from nids_xray.autoencoder import TinyAutoencoder


def central_difference(ae: TinyAutoencoder, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    theta = ae.get_params()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        bump = theta.copy()
        bump[i] = theta[i] + eps
        ae.set_params(bump)
        hi = ae.loss(x)
        bump[i] = theta[i] - eps
        ae.set_params(bump)
        lo = ae.loss(x)
        grad[i] = (hi - lo) / (2.0 * eps)
    ae.set_params(theta)
    return grad


def test_backprop_matches_finite_differences(rng):
    # 50 random (shape, input) cases, relative error < 1e-4
    for case in range(50):
        d = int(rng.integers(2, 9))
        h = int(rng.integers(1, d + 1))
        ae = TinyAutoencoder(d, h, rng)
        x = rng.uniform(0.0, 1.0, size=d)
        got = ae.flat_gradients(x)
        want = central_difference(ae, x)
        scale = max(1e-8, float(np.abs(want).max()))
        err = float(np.abs(got - want).max()) / scale
        assert err < 1e-4, "case %d: relative gradient error %g" % (case, err)


def test_init_ranges(rng):
    ae = TinyAutoencoder(10, 7, rng)
    assert np.all(np.abs(ae.W1) <= 1.0 / 10)
    assert np.all(np.abs(ae.W2) <= 1.0 / 7)
    assert np.all(ae.b1 == 0.0)
    assert np.all(ae.b2 == 0.0)
    assert ae.W1.shape == (10, 7)
    assert ae.W2.shape == (7, 10)


def test_init_deterministic_per_seed():
    a = TinyAutoencoder(6, 4, np.random.default_rng(42))
    b = TinyAutoencoder(6, 4, np.random.default_rng(42))
    assert np.array_equal(a.get_params(), b.get_params())


def test_invalid_sizes_rejected(rng):
    with pytest.raises(ValueError):
        TinyAutoencoder(0, 1, rng)
    with pytest.raises(ValueError):
        TinyAutoencoder(5, 0, rng)


def test_step_returns_pre_update_rmse(rng):
    ae = TinyAutoencoder(5, 3, rng)
    x = rng.uniform(size=5)
    _, y = ae.forward(x)
    want = float(np.sqrt(np.mean((y - x) ** 2)))
    got = ae.step(x, lr=0.01)
    assert got == pytest.approx(want, abs=0.0)


def test_step_decreases_loss_on_repeated_row(rng):
    ae = TinyAutoencoder(6, 4, rng)
    x = rng.uniform(size=6)
    before = ae.loss(x)
    for _ in range(200):
        ae.step(x, lr=0.05)
    after = ae.loss(x)
    assert after < before


def test_step_equals_gradient_descent_update(rng):
    # step() must apply exactly -lr * gradients() to every parameter
    ae = TinyAutoencoder(5, 3, rng)
    x = rng.uniform(size=5)
    theta = ae.get_params()
    g = ae.flat_gradients(x)
    ae.step(x, lr=0.3)
    assert np.allclose(ae.get_params(), theta - 0.3 * g, rtol=0, atol=1e-15)


def test_rmse_batch_matches_per_row(rng):
    ae = TinyAutoencoder(7, 4, rng)
    X = rng.uniform(size=(9, 7))
    batch = ae.rmse(X)
    for i in range(9):
        _, y = ae.forward(X[i])
        assert batch[i] == pytest.approx(float(np.sqrt(np.mean((y - X[i]) ** 2))), rel=1e-12)


def test_outputs_in_unit_interval(rng):
    ae = TinyAutoencoder(4, 2, rng)
    X = rng.normal(size=(20, 4)) * 10
    Y = ae.reconstruct(X)
    assert np.all(Y > 0.0) and np.all(Y < 1.0)


def test_param_roundtrip(rng):
    ae = TinyAutoencoder(5, 3, rng)
    theta = ae.get_params()
    ae.set_params(theta * 2.0)
    assert np.array_equal(ae.get_params(), theta * 2.0)
    with pytest.raises(ValueError):
        ae.set_params(theta[:-1])
