"""Roughness-penalized least-squares projection of curves onto a basis,
GCV-driven smoothing-parameter selection on a fixed logarithmic grid, and
error-based growth of the basis count until the training-set projection
error stagnates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .basis import BSPLINE, FOURIER, BasisSystem, design_matrix, roughness_matrix

# tau grid spans 1e-6 .. 1e6; 25 points give half-decade resolution.
TAU_GRID_SIZE = 25
DEFAULT_DELTA_R = 0.05
DEFAULT_NB0 = {FOURIER: 11, BSPLINE: 8}

# Relative jitter ladder tried before declaring the normal equations singular.
_JITTERS = (0.0, 1e-12, 1e-10, 1e-8, 1e-6)


class SingularSystemError(np.linalg.LinAlgError):
    """Raised when (H'H + tau R) cannot be factorized even with jitter."""


def _cho_with_jitter(A: np.ndarray):
    scale = np.abs(np.diag(A)).max()
    for jitter in _JITTERS:
        try:
            return cho_factor(A + jitter * scale * np.eye(A.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise SingularSystemError(
        "penalized normal equations are singular even after jitter up to "
        f"{_JITTERS[-1]:.0e} * max|diag| = {_JITTERS[-1] * scale:.3e}"
    )


class PenalizedSolver:
    """Cached symmetric factorization of (H'H + tau R)."""

    def __init__(self, H: np.ndarray, R: np.ndarray, tau: float):
        if tau < 0.0:
            raise ValueError("tau must be nonnegative")
        self.H = H
        self.tau = float(tau)
        self._HtH = H.T @ H
        self._cho = _cho_with_jitter(self._HtH + tau * R)

    def coefficients(self, centered: np.ndarray) -> np.ndarray:
        """Solve for the coefficient matrix C (n_b x N) of centered rows."""
        return cho_solve(self._cho, self.H.T @ np.atleast_2d(centered).T)

    def coefficients_single(self, curve: np.ndarray) -> np.ndarray:
        return cho_solve(self._cho, self.H.T @ np.asarray(curve, dtype=float))

    def trace_smoother(self) -> float:
        """trace(H (H'H + tau R)^-1 H') without forming the n_t x n_t matrix."""
        return float(np.trace(cho_solve(self._cho, self._HtH)))


@dataclass
class SmoothingFit:
    """Penalized fit of an ensemble: parameter, coefficients, GCV score."""

    tau: float
    coeffs: np.ndarray
    gcv_value: float
    solver: PenalizedSolver = field(repr=False)


def fit_coefficients(H, R, tau, centered) -> np.ndarray:
    """Penalized least-squares coefficients, one column per curve.

    Each column solves (H'H + tau R) c = H' y_c via a symmetric
    factorization; the matrix is never inverted explicitly.
    """
    return PenalizedSolver(H, R, tau).coefficients(centered)


def _fit_with_gcv(H, R, tau, centered) -> SmoothingFit:
    solver = PenalizedSolver(H, R, tau)
    centered = np.atleast_2d(centered)
    C = solver.coefficients(centered)
    n_obs = H.shape[0]
    sse = float(np.sum((centered.T - H @ C) ** 2))
    denom = n_obs - solver.trace_smoother()
    if abs(denom) < 1e-12 * max(1.0, n_obs):
        return SmoothingFit(tau, C, math.inf, solver)
    return SmoothingFit(tau, C, n_obs / denom**2 * sse, solver)


def gcv(tau, H, R, centered) -> float:
    """Generalized cross-validation score for one smoothing parameter.

    n / [n - trace(S(tau))]^2 times the residual sum of squares over all
    curves, with n the per-curve observation count (rows of H) and
    S(tau) = H (H'H + tau R)^-1 H'.  The trace is the effective degrees
    of freedom of one curve's smoother, so it is compared against the
    same curve's observation count.
    """
    return _fit_with_gcv(H, R, tau, centered).gcv_value


def tau_grid(n_tau: int = TAU_GRID_SIZE) -> np.ndarray:
    """Logarithmic grid 10^-6 .. 10^6 with n_tau points."""
    if n_tau < 2:
        raise ValueError("need at least 2 grid points")
    i = np.arange(1, n_tau + 1)
    return 10.0 ** (-6.0 + 12.0 * (i - 1) / (n_tau - 1))


def select_tau(H, R, centered, n_tau: int = TAU_GRID_SIZE) -> float:
    """Grid minimizer of the GCV score; ties break toward smaller tau."""
    grid = tau_grid(n_tau)
    values = [gcv(t, H, R, centered) for t in grid]
    return float(grid[int(np.argmin(values))])


def effective_nb(kind: str, n_b: int, order: int = 4) -> int:
    """Usable basis count: odd (>= 3) for Fourier, >= order for B-splines."""
    if kind == FOURIER:
        n_b = max(n_b, 3)
        return n_b if n_b % 2 == 1 else n_b + 1
    return max(n_b, order)


def _mean_projection_nrmse(centered: np.ndarray, fitted: np.ndarray) -> float:
    # Zero-range (constant) centered curves are exactly representable by a
    # zero coefficient vector, so they contribute zero error.
    spans = centered.max(axis=1) - centered.min(axis=1)
    resid = np.linalg.norm(centered - fitted, axis=1)
    out = np.zeros_like(resid)
    ok = spans > 0.0
    out[ok] = resid[ok] / spans[ok]
    return float(out.mean())


def select_nb(
    kind: str,
    centered: np.ndarray,
    nodes: np.ndarray,
    interval: tuple[float, float],
    n_b0: int | None = None,
    delta_r: float = DEFAULT_DELTA_R,
    order: int = 4,
    n_tau: int = TAU_GRID_SIZE,
    tau_override: float | None = None,
    trace: list | None = None,
):
    """Grow the basis count until the mean projection NRMSE stagnates.

    Starting from n_b0, the count is increased by k * n_b0 in round k.
    Each round reselects tau on the GCV grid (unless tau_override pins it)
    and recomputes the training-set mean NRMSE; the loop stops when the
    relative change between consecutive rounds falls below delta_r.

    Parameters
    ----------
    kind : "fourier" or "bspline".
    centered : ndarray (N, n_nodes)
        Centered curves.
    nodes : ndarray
        Sample times of the curve columns.
    interval : (t0, te)
        Basis interval; may extend past the last node for periodic bases.
    trace : list, optional
        If given, one dict per round with keys n_b, tau, delta is appended.

    Returns
    -------
    (n_b, tau) : the selected basis count and smoothing parameter.
    """
    if delta_r <= 0.0:
        raise ValueError("delta_r must be positive")
    if n_b0 is None:
        n_b0 = DEFAULT_NB0[kind]
    if n_b0 < 2:
        raise ValueError("n_b0 must be at least 2")
    t0, te = interval
    nodes = np.asarray(nodes, dtype=float)
    centered = np.atleast_2d(np.asarray(centered, dtype=float))
    cap = 4 * nodes.size

    def round_fit(nb_eff: int):
        sys = BasisSystem(kind, nb_eff, t0, te, order=order)
        H = design_matrix(sys, nodes)
        R = roughness_matrix(sys)
        if tau_override is not None:
            tau = tau_override
            C = PenalizedSolver(H, R, tau).coefficients(centered)
        else:
            tau = select_tau(H, R, centered, n_tau)
            C = _fit_with_gcv(H, R, tau, centered).coeffs
        delta = _mean_projection_nrmse(centered, (H @ C).T)
        if trace is not None:
            trace.append({"n_b": nb_eff, "tau": tau, "delta": delta})
        return tau, delta

    nb_raw = n_b0
    nb_eff = effective_nb(kind, nb_raw, order)
    tau, delta1 = round_fit(nb_eff)
    if delta1 < 1e-12:
        # Degenerate zero-error ensemble (e.g. constant curves): converged.
        return nb_eff, tau
    k = 1
    while True:
        nb_raw += k * n_b0
        nb_eff = effective_nb(kind, nb_raw, order)
        if nb_eff > cap:
            raise RuntimeError(
                f"basis-count selection did not converge below {cap} functions"
            )
        tau, delta2 = round_fit(nb_eff)
        if delta2 < 1e-12 or abs(delta1 - delta2) / delta2 < delta_r:
            return nb_eff, tau
        delta1 = delta2
        k += 1
