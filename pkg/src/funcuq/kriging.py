"""Ordinary Kriging with a homoscedastic nugget: Gaussian kernel,
marginal-likelihood hyperparameter estimation with an analytically
profiled mean, and mean/variance prediction.

Inputs are mapped to the unit hypercube and targets standardized before
fitting; the hyperparameter search ranges assume that scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

from .core import latin_hypercube

THETA_BOUNDS = (1e-4, 1e4)
SIGMA_Z2_BOUNDS = (1e-4, 1e2)
SIGMA_N2_BOUNDS = (1e-8, 1e1)
DEFAULT_N_STARTS = 10
DEFAULT_BUDGET = 400

_JITTERS = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)


def kernel_eval(sigma_z2: float, theta, x, x2) -> float:
    """Gaussian kernel sigma_z2 * exp(-(x-x2)' diag(theta) (x-x2))."""
    d = np.asarray(x, dtype=float) - np.asarray(x2, dtype=float)
    return float(sigma_z2 * np.exp(-np.sum(np.asarray(theta) * d * d)))


def _kernel_matrix(sigma_z2, theta, A, B=None):
    root = np.sqrt(np.asarray(theta, dtype=float))
    As = np.atleast_2d(A) * root
    Bs = As if B is None else np.atleast_2d(B) * root
    return sigma_z2 * np.exp(-cdist(As, Bs, "sqeuclidean"))


def _cho_with_jitter(A):
    scale = np.abs(np.diag(A)).max()
    for jitter in _JITTERS:
        try:
            return cho_factor(A + jitter * scale * np.eye(A.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("kernel matrix is not positive definite")


def log_marginal_likelihood(X, y, mu, sigma_z2, theta, sigma_n2) -> float:
    """Marginal log likelihood of targets y at inputs X.

    -(1/2) r' A^-1 r - (1/2) ln|A| - (N/2) ln(2 pi) with A = K + sigma_n2 I
    and r = y - mu; the log-determinant comes from a Cholesky factorization.
    Returns -inf when the factorization fails.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    A = _kernel_matrix(sigma_z2, theta, X)
    A[np.diag_indices_from(A)] += sigma_n2
    try:
        cho = cho_factor(A, lower=True)
    except np.linalg.LinAlgError:
        return -math.inf
    r = y - mu
    logdet = 2.0 * np.sum(np.log(np.diag(cho[0])))
    return float(
        -0.5 * r @ cho_solve(cho, r) - 0.5 * logdet - 0.5 * y.size * math.log(2 * math.pi)
    )


def normalize_inputs(X, lo, hi):
    """Map raw inputs to [0,1]^p by training bounds; constant dims go to 0.5."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    span = hi - lo
    out = np.full_like(X, 0.5)
    ok = span > 0.0
    out[:, ok] = (X[:, ok] - lo[ok]) / span[ok]
    return out


@dataclass
class KrigingModel:
    """A fitted single-output Kriging model.

    Stores normalized training inputs, the standardized target vector,
    the optimized hyperparameters, and the cached factorization used by
    prediction.  sigma_z2 and sigma_n2 live on the standardized scale;
    noise_variance_raw reports the nugget on the original target scale.
    """

    input_lo: np.ndarray
    input_hi: np.ndarray
    X_norm: np.ndarray = field(repr=False)
    y_std: np.ndarray = field(repr=False)
    y_offset: float
    y_scale: float
    mu: float
    sigma_z2: float
    theta: np.ndarray
    sigma_n2: float
    _cho: tuple = field(repr=False)
    _alpha: np.ndarray = field(repr=False)

    @property
    def noise_variance_raw(self) -> float:
        return self.sigma_n2 * self.y_scale**2

    def predict(self, x_star):
        """Predictive mean and variance at one raw input point."""
        mean, var = self.predict_batch(np.atleast_2d(x_star))
        return float(mean[0]), float(var[0])

    def predict_batch(self, X_star, with_var: bool = True):
        """Predictive means (and variances) at raw input rows.

        Variance is k(x*,x*) - k' A^-1 k on the standardized scale,
        clamped at zero from below, then rescaled by the target variance.
        """
        Xn = normalize_inputs(X_star, self.input_lo, self.input_hi)
        Ks = _kernel_matrix(self.sigma_z2, self.theta, self.X_norm, Xn)
        mean = self.mu + Ks.T @ self._alpha
        mean = mean * self.y_scale + self.y_offset
        if not with_var:
            return mean, None
        var = self.sigma_z2 - np.einsum("ij,ij->j", Ks, cho_solve(self._cho, Ks))
        var = np.clip(var, 0.0, None) * self.y_scale**2
        return mean, var


def _profiled_mu(cho, y):
    ones = np.ones_like(y)
    w = cho_solve(cho, ones)
    return float(w @ y / (w @ ones))


def _log_bounds(p, fix_nugget):
    bounds = [np.log10(THETA_BOUNDS)] * p + [np.log10(SIGMA_Z2_BOUNDS)]
    if fix_nugget is None:
        bounds.append(np.log10(SIGMA_N2_BOUNDS))
    return np.array(bounds)


def fit_kriging(
    X,
    y,
    rng: np.random.Generator,
    n_starts: int = DEFAULT_N_STARTS,
    budget: int = DEFAULT_BUDGET,
    fix_nugget: float | None = None,
    input_bounds: tuple | None = None,
) -> KrigingModel:
    """Fit an ordinary Kriging model with nugget by maximum likelihood.

    The global mean is profiled analytically (its optimum is closed-form),
    and the remaining hyperparameters are searched in log10 space by a
    derivative-free simplex descent from n_starts Latin-hypercube starts.

    Parameters
    ----------
    X : (N, p) raw training inputs.
    y : (N,) training targets.
    rng : generator driving the multi-start design.
    fix_nugget : float, optional
        Pin the nugget variance (on the standardized scale) instead of
        estimating it; 0.0 gives an interpolating model.
    input_bounds : (lo, hi) arrays, optional
        Normalization bounds; defaults to the per-dimension training range.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n < 2:
        raise ValueError("need at least 2 training points")
    if y.shape != (n,):
        raise ValueError("target length does not match inputs")

    if input_bounds is None:
        lo, hi = X.min(axis=0), X.max(axis=0)
    else:
        lo, hi = (np.asarray(b, dtype=float) for b in input_bounds)
    Xn = normalize_inputs(X, lo, hi)

    y_offset = float(y.mean())
    y_scale = float(y.std())
    if y_scale <= 1e-30 * max(1.0, abs(y_offset)):
        y_scale = 1.0
    ys = (y - y_offset) / y_scale

    bounds = _log_bounds(p, fix_nugget)

    def unpack(z):
        z = np.clip(z, bounds[:, 0], bounds[:, 1])
        theta = 10.0 ** z[:p]
        sigma_z2 = 10.0 ** z[p]
        sigma_n2 = fix_nugget if fix_nugget is not None else 10.0 ** z[p + 1]
        return theta, sigma_z2, sigma_n2

    def negative_lml(z):
        theta, sigma_z2, sigma_n2 = unpack(z)
        A = _kernel_matrix(sigma_z2, theta, Xn)
        A[np.diag_indices_from(A)] += sigma_n2
        try:
            cho = cho_factor(A, lower=True)
        except np.linalg.LinAlgError:
            # Large finite sentinel keeps the simplex well-defined.
            return 1e300
        mu = _profiled_mu(cho, ys)
        r = ys - mu
        logdet = 2.0 * np.sum(np.log(np.diag(cho[0])))
        return float(0.5 * r @ cho_solve(cho, r) + 0.5 * logdet)

    starts = latin_hypercube(n_starts, bounds.shape[0], bounds, rng)
    best_z, best_val = None, math.inf
    for z0 in starts:
        res = minimize(
            negative_lml,
            z0,
            method="Nelder-Mead",
            options={"maxfev": budget, "maxiter": budget, "xatol": 1e-4, "fatol": 1e-8},
        )
        if res.fun < best_val:
            best_val, best_z = float(res.fun), res.x
    if best_z is None or best_val >= 1e300:
        raise np.linalg.LinAlgError("no hyperparameter start produced a PD kernel")

    theta, sigma_z2, sigma_n2 = unpack(best_z)
    A = _kernel_matrix(sigma_z2, theta, Xn)
    A[np.diag_indices_from(A)] += sigma_n2
    cho = _cho_with_jitter(A)
    mu = _profiled_mu(cho, ys)
    alpha = cho_solve(cho, ys - mu)
    return KrigingModel(
        input_lo=lo,
        input_hi=hi,
        X_norm=Xn,
        y_std=ys,
        y_offset=y_offset,
        y_scale=y_scale,
        mu=mu,
        sigma_z2=float(sigma_z2),
        theta=np.asarray(theta, dtype=float),
        sigma_n2=float(sigma_n2),
        _cho=cho,
        _alpha=alpha,
    )
