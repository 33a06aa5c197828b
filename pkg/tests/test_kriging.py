import numpy as np
import pytest

import funcuq as fq
from funcuq.kriging import (
    SIGMA_N2_BOUNDS,
    SIGMA_Z2_BOUNDS,
    THETA_BOUNDS,
    fit_kriging,
    kernel_eval,
    log_marginal_likelihood,
    normalize_inputs,
)


def dense_lml(X, y, mu, sigma_z2, theta, sigma_n2):
    n = len(y)
    D = np.zeros((n, n))
    for d in range(X.shape[1]):
        D += theta[d] * np.subtract.outer(X[:, d], X[:, d]) ** 2
    K = sigma_z2 * np.exp(-D) + sigma_n2 * np.eye(n)
    r = y - mu
    sign, logdet = np.linalg.slogdet(K)
    assert sign > 0
    return -0.5 * r @ np.linalg.inv(K) @ r - 0.5 * logdet - 0.5 * n * np.log(2 * np.pi)


def test_kernel_zero_distance():
    assert kernel_eval(2.5, [1.0, 3.0], [0.2, 0.4], [0.2, 0.4]) == 2.5


def test_kernel_unit_case():
    assert kernel_eval(1.0, [1.0], [1.0], [0.0]) == pytest.approx(np.exp(-1), rel=1e-12)


def test_kernel_weighted_case():
    val = kernel_eval(1.0, [2.0, 3.0], [1.0, 1.0], [0.0, 0.0])
    assert val == pytest.approx(np.exp(-5.0), rel=1e-12)


def test_lml_scalar_case():
    for sz2, sn2 in ((1.0, 0.0), (0.7, 0.3)):
        got = log_marginal_likelihood(np.array([[0.5]]), np.array([2.0]), 2.0, sz2, [1.0], sn2)
        expected = -0.5 * np.log(sz2 + sn2) - 0.5 * np.log(2 * np.pi)
        assert got == pytest.approx(expected, abs=1e-12)


def test_lml_dense_oracle():
    rng = fq.make_rng(40)
    for n in (2, 5, 8):
        X = rng.random((n, 3))
        y = rng.normal(size=n)
        theta = 10.0 ** rng.uniform(-1, 1, size=3)
        mu, sz2, sn2 = 0.3, 1.7, 0.05
        got = log_marginal_likelihood(X, y, mu, sz2, theta, sn2)
        assert got == pytest.approx(dense_lml(X, y, mu, sz2, theta, sn2), abs=1e-10)


def test_logdet_monotone_in_nugget():
    rng = fq.make_rng(41)
    for _ in range(20):
        X = rng.random((6, 2))
        A = np.exp(-np.sum((X[:, None] - X[None]) ** 2, axis=-1))
        base = np.linalg.slogdet(A + 1e-6 * np.eye(6))[1]
        bumped = np.linalg.slogdet(A + (1e-6 + 0.1) * np.eye(6))[1]
        assert bumped >= base


def test_normalize_inputs_constant_dim():
    X = np.array([[1.0, 5.0], [2.0, 5.0]])
    lo, hi = X.min(axis=0), X.max(axis=0)
    Xn = normalize_inputs(X, lo, hi)
    assert np.allclose(Xn[:, 0], [0.0, 1.0])
    assert np.allclose(Xn[:, 1], 0.5)


def test_fit_constant_target():
    X = np.linspace(0, 1, 10)[:, None]
    y = np.full(10, 3.7)
    model = fit_kriging(X, y, fq.make_rng(1), n_starts=4, budget=100)
    mean, var = model.predict([[0.31]])
    assert mean[0] if isinstance(mean, np.ndarray) else mean == pytest.approx(3.7, abs=1e-6)
    means, _ = model.predict_batch(np.linspace(0, 1, 7)[:, None])
    assert np.allclose(means, 3.7, atol=1e-6)


def test_fit_noiseless_smooth_function():
    X = np.linspace(0, 1, 20)[:, None]
    y = np.sin(5 * X[:, 0]) + 2.0
    model = fit_kriging(X, y, fq.make_rng(2))
    assert model.noise_variance_raw <= 1e-4
    xs = np.linspace(0.05, 0.95, 9)[:, None]
    means, _ = model.predict_batch(xs)
    assert np.abs(means - (np.sin(5 * xs[:, 0]) + 2.0)).max() <= 1e-3


def test_fit_deterministic():
    rng_data = fq.make_rng(3)
    X = rng_data.random((15, 2))
    y = np.sin(3 * X[:, 0]) + X[:, 1] ** 2
    a = fit_kriging(X, y, fq.make_rng(7), n_starts=5, budget=150)
    b = fit_kriging(X, y, fq.make_rng(7), n_starts=5, budget=150)
    assert np.array_equal(a.theta, b.theta)
    assert a.sigma_z2 == b.sigma_z2
    assert a.sigma_n2 == b.sigma_n2
    assert a.mu == b.mu


def test_interpolation_with_pinned_zero_nugget():
    rng = fq.make_rng(4)
    X = rng.random((12, 2))
    y = np.cos(2 * X[:, 0]) + 0.5 * X[:, 1]
    model = fit_kriging(X, y, fq.make_rng(5), fix_nugget=0.0)
    means, vars_ = model.predict_batch(X)
    assert np.abs((means - y) / y).max() <= 1e-6
    assert vars_.max() <= 1e-8 * model.sigma_z2 * model.y_scale**2


def test_far_field_reverts_to_mean():
    X = np.linspace(0.4, 0.6, 8)[:, None]
    y = np.sin(20 * X[:, 0])
    model = fit_kriging(X, y, fq.make_rng(6), n_starts=5, budget=200)
    far = np.array([[1e3]])
    mean, var = model.predict(far)
    mu_raw = model.mu * model.y_scale + model.y_offset
    sz2_raw = model.sigma_z2 * model.y_scale**2
    assert mean == pytest.approx(mu_raw, abs=0.01 * max(1.0, abs(mu_raw)))
    assert var == pytest.approx(sz2_raw, rel=0.01)


def test_two_point_closed_form_oracle():
    X = np.array([[0.0], [1.0]])
    y = np.array([1.0, 3.0])
    model = fit_kriging(X, y, fq.make_rng(7), n_starts=3, budget=100)
    x_star = np.array([0.3])
    mean, var = model.predict(x_star)
    # Dense 2x2 formula in the standardized space.
    theta, sz2, sn2 = model.theta, model.sigma_z2, model.sigma_n2
    Xn = model.X_norm
    ys = model.y_std
    k12 = sz2 * np.exp(-theta[0] * (Xn[0, 0] - Xn[1, 0]) ** 2)
    K = np.array([[sz2 + sn2, k12], [k12, sz2 + sn2]])
    xs = (x_star[0] - model.input_lo[0]) / (model.input_hi[0] - model.input_lo[0])
    k_vec = sz2 * np.exp(-theta[0] * (Xn[:, 0] - xs) ** 2)
    Kinv = np.linalg.inv(K)
    mean_std = model.mu + k_vec @ Kinv @ (ys - model.mu)
    var_std = sz2 - k_vec @ Kinv @ k_vec
    assert mean == pytest.approx(mean_std * model.y_scale + model.y_offset, abs=1e-12)
    assert var == pytest.approx(max(var_std, 0.0) * model.y_scale**2, abs=1e-12)


def test_variance_bounds():
    rng = fq.make_rng(8)
    X = rng.random((20, 3))
    y = np.sin(4 * X[:, 0]) * X[:, 1] + rng.normal(scale=0.05, size=20)
    model = fit_kriging(X, y, fq.make_rng(9), n_starts=4, budget=150)
    queries = rng.random((100, 3)) * 2.0 - 0.5
    _, vars_ = model.predict_batch(queries)
    sz2_raw = model.sigma_z2 * model.y_scale**2
    assert np.all(vars_ >= 0.0)
    assert np.all(vars_ <= sz2_raw * (1 + 1e-10))


def test_affine_input_rescaling_invariance():
    rng = fq.make_rng(10)
    X = rng.random((15, 2))
    y = np.sin(3 * X[:, 0]) + X[:, 1]
    # Power-of-two scales with no shift keep the normalization bit-exact.
    scale = np.array([128.0, 0.0078125])
    a = fit_kriging(X, y, fq.make_rng(11), n_starts=4, budget=150)
    b = fit_kriging(X * scale, y, fq.make_rng(11), n_starts=4, budget=150)
    assert np.array_equal(a.X_norm, b.X_norm)
    q = rng.random((6, 2))
    ma, _ = a.predict_batch(q)
    mb, _ = b.predict_batch(q * scale)
    assert np.allclose(ma, mb, rtol=1e-12, atol=1e-12)


def test_hyperparameters_within_bounds():
    rng = fq.make_rng(12)
    X = rng.random((18, 2))
    y = X[:, 0] ** 2 + rng.normal(scale=0.1, size=18)
    model = fit_kriging(X, y, fq.make_rng(13), n_starts=4, budget=150)
    assert np.all(model.theta >= THETA_BOUNDS[0]) and np.all(model.theta <= THETA_BOUNDS[1])
    assert SIGMA_Z2_BOUNDS[0] <= model.sigma_z2 <= SIGMA_Z2_BOUNDS[1]
    assert SIGMA_N2_BOUNDS[0] <= model.sigma_n2 <= SIGMA_N2_BOUNDS[1]


def test_fit_validation():
    with pytest.raises(ValueError):
        fit_kriging(np.zeros((1, 2)), np.zeros(1), fq.make_rng(0))
    with pytest.raises(ValueError):
        fit_kriging(np.zeros((4, 2)), np.zeros(3), fq.make_rng(0))
