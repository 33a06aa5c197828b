"""Forward uncertainty propagation through a surrogate (or an exact model
hook) by Monte Carlo, kernel density estimates of extreme-value
distributions, and Bayesian inverse inference of inputs and noise scale
with an affine-invariant ensemble sampler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import FLOAT_FMT

DEFAULT_N_MCS = 100_000
DEFAULT_WALKERS = 100
DEFAULT_ITERATIONS = 300
DEFAULT_BURN_IN = 0.5
STRETCH_A = 2.0

_LOG_2PI = math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Marginal distributions


@dataclass(frozen=True)
class Normal:
    mean: float
    std: float

    def __post_init__(self):
        if self.std <= 0:
            raise ValueError("std must be positive")

    def sample(self, rng, n):
        return rng.normal(self.mean, self.std, n)

    def logpdf(self, x):
        z = (x - self.mean) / self.std
        return -0.5 * z * z - math.log(self.std) - 0.5 * _LOG_2PI


@dataclass(frozen=True)
class Lognormal:
    """Parameterized by the mean and standard deviation of the variable
    itself (not of its logarithm)."""

    mean: float
    std: float

    def __post_init__(self):
        if self.mean <= 0 or self.std <= 0:
            raise ValueError("lognormal needs positive mean and std")

    @property
    def _sigma2_log(self) -> float:
        return math.log1p((self.std / self.mean) ** 2)

    @property
    def _mu_log(self) -> float:
        return math.log(self.mean) - 0.5 * self._sigma2_log

    def sample(self, rng, n):
        return rng.lognormal(self._mu_log, math.sqrt(self._sigma2_log), n)

    def logpdf(self, x):
        if x <= 0:
            return -math.inf
        s2 = self._sigma2_log
        z = math.log(x) - self._mu_log
        return -0.5 * z * z / s2 - math.log(x) - 0.5 * math.log(s2) - 0.5 * _LOG_2PI


@dataclass(frozen=True)
class Uniform:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError("lower bound must be below upper bound")

    def sample(self, rng, n):
        return rng.uniform(self.lower, self.upper, n)

    def logpdf(self, x):
        if self.lower <= x <= self.upper:
            return -math.log(self.upper - self.lower)
        return -math.inf


class InputDistribution:
    """Independent per-dimension marginals."""

    def __init__(self, marginals):
        self.marginals = tuple(marginals)
        if not self.marginals:
            raise ValueError("need at least one marginal")

    @property
    def p(self) -> int:
        return len(self.marginals)

    def sample(self, rng, n):
        out = np.empty((n, self.p))
        for j, marg in enumerate(self.marginals):
            out[:, j] = marg.sample(rng, n)
        return out

    def logpdf(self, x) -> float:
        x = np.asarray(x, dtype=float)
        total = 0.0
        for j, marg in enumerate(self.marginals):
            lp = marg.logpdf(float(x[j]))
            if lp == -math.inf:
                return -math.inf
            total += lp
        return total


# ---------------------------------------------------------------------------
# Forward UQ


@dataclass
class ForwardUqResult:
    """Monte Carlo moments of the response and its extreme values."""

    mean: np.ndarray
    std: np.ndarray
    maxima: np.ndarray = field(repr=False)
    minima: np.ndarray = field(repr=False)
    kde_grid: np.ndarray = field(repr=False)
    kde_max: np.ndarray = field(repr=False)
    kde_min: np.ndarray = field(repr=False)
    n_mcs: int


def silverman_bandwidth(samples) -> float:
    """0.9 min(std, IQR/1.34) n^(-1/5); errors on zero spread."""
    samples = np.asarray(samples, dtype=float)
    if np.unique(samples).size < 2:
        raise ValueError("need at least 2 distinct samples")
    sd = samples.std(ddof=1)
    q75, q25 = np.percentile(samples, [75, 25])
    h = 0.9 * min(sd, (q75 - q25) / 1.34) * samples.size ** (-0.2)
    if h <= 0.0:
        raise ValueError("zero bandwidth (degenerate interquartile range)")
    return float(h)


def kde_pdf(samples, eval_points) -> np.ndarray:
    """Gaussian kernel density estimate with the Silverman bandwidth."""
    samples = np.asarray(samples, dtype=float)
    eval_points = np.asarray(eval_points, dtype=float)
    h = silverman_bandwidth(samples)
    z = (eval_points[:, None] - samples[None, :]) / h
    return np.exp(-0.5 * z * z).sum(axis=1) / (samples.size * h * math.sqrt(2 * math.pi))


def _predict_curves(model, X) -> np.ndarray:
    if hasattr(model, "predict_mean_curves"):
        return model.predict_mean_curves(X)
    return np.atleast_2d(np.asarray(model(X), dtype=float))


def forward_uq(
    model,
    dist: InputDistribution,
    n_mcs: int = DEFAULT_N_MCS,
    grid=None,
    rng: np.random.Generator | None = None,
    batch_size: int = 4096,
    kde_points: int = 512,
) -> ForwardUqResult:
    """Propagate an input distribution through a response model.

    The model is either a fitted LatentSurrogate or a vectorized callable
    mapping an (n, p) input block to (n, n_t) response curves.  For a
    surrogate, the mean curve is assembled from the averaged latent means
    with a single basis multiplication; the standard deviation uses the
    population 1/N convention over the per-sample predictive mean curves.
    """
    if n_mcs < 2:
        raise ValueError("need at least 2 Monte Carlo samples")
    if rng is None:
        raise ValueError("an explicit generator is required")
    is_surrogate = hasattr(model, "predict_mean_curves")
    if grid is None and is_surrogate:
        grid = model.grid
    if grid is None:
        raise ValueError("grid is required for exact-model hooks")
    n_t = grid.n_t

    X = dist.sample(rng, n_mcs)
    # Accumulate around the first curve so the variance of nearly
    # degenerate inputs is not lost to cancellation.
    ref = None
    shift_sum = np.zeros(n_t)
    shift_sumsq = np.zeros(n_t)
    score_sum = None
    maxima = np.empty(n_mcs)
    minima = np.empty(n_mcs)
    for start in range(0, n_mcs, batch_size):
        block = X[start : start + batch_size]
        if is_surrogate:
            scores, _ = model.predict_scores(block, with_var=False)
            if score_sum is None:
                score_sum = np.zeros(scores.shape[1])
            score_sum += scores.sum(axis=0)
            curves = model.reducer.mean_curve + scores @ model._phi.T
        else:
            curves = _predict_curves(model, block)
            if curves.shape[1] != n_t:
                raise ValueError("model hook returned curves of wrong length")
        if ref is None:
            ref = curves[0].copy()
        shifted = curves - ref
        shift_sum += shifted.sum(axis=0)
        shift_sumsq += (shifted**2).sum(axis=0)
        maxima[start : start + block.shape[0]] = curves.max(axis=1)
        minima[start : start + block.shape[0]] = curves.min(axis=1)

    if is_surrogate:
        mean = model.reducer.mean_curve + model._phi @ (score_sum / n_mcs)
    else:
        mean = ref + shift_sum / n_mcs
    mu_shift = mean - ref
    var = (
        shift_sumsq / n_mcs
        - 2.0 * mu_shift * (shift_sum / n_mcs)
        + mu_shift**2
    )
    std = np.sqrt(np.clip(var, 0.0, None))

    try:
        h_max = silverman_bandwidth(maxima)
        h_min = silverman_bandwidth(minima)
        lo = min(maxima.min() - 6 * h_max, minima.min() - 6 * h_min)
        hi = max(maxima.max() + 6 * h_max, minima.max() + 6 * h_min)
        kde_grid = np.linspace(lo, hi, kde_points)
        kde_max = kde_pdf(maxima, kde_grid)
        kde_min = kde_pdf(minima, kde_grid)
    except ValueError:
        # Degenerate point-mass input: no spread to estimate.
        kde_grid = np.array([])
        kde_max = np.array([])
        kde_min = np.array([])
    return ForwardUqResult(
        mean=mean,
        std=std,
        maxima=maxima,
        minima=minima,
        kde_grid=kde_grid,
        kde_max=kde_max,
        kde_min=kde_min,
        n_mcs=n_mcs,
    )


# ---------------------------------------------------------------------------
# Inverse UQ


def _model_curve(model, x) -> np.ndarray:
    if hasattr(model, "predict_curve"):
        return model.predict_curve(x)[0]
    return np.asarray(model(x), dtype=float)


def log_posterior(model, x_priors, sigma_prior, observations, x, sigma) -> float:
    """Unnormalized log posterior of inputs and noise std given curves.

    Independent Gaussian noise of variance sigma^2 at each of the n_t
    nodes gives each observation the likelihood factor
    -(n_t/2) ln(2 pi sigma^2) - ||y_i - M(x)||^2 / (2 sigma^2).
    Returns -inf outside the prior support.
    """
    if sigma <= 0:
        return -math.inf
    observations = np.atleast_2d(np.asarray(observations, dtype=float))
    if observations.shape[0] == 0:
        raise ValueError("need at least one observation")
    lp = sigma_prior.logpdf(sigma)
    if lp == -math.inf:
        return -math.inf
    x = np.asarray(x, dtype=float)
    for j, prior in enumerate(x_priors):
        contrib = prior.logpdf(float(x[j]))
        if contrib == -math.inf:
            return -math.inf
        lp += contrib
    curve = _model_curve(model, x)
    n_t = curve.size
    sigma2 = sigma * sigma
    resid2 = np.sum((observations - curve) ** 2, axis=1)
    lp += np.sum(-0.5 * n_t * np.log(2 * math.pi * sigma2) - resid2 / (2 * sigma2))
    return float(lp)


@dataclass
class PosteriorSamples:
    """Post-burn-in ensemble draws with sampler metadata."""

    draws: np.ndarray = field(repr=False)
    walkers: int
    iterations: int
    burn_in: float
    acceptance_rate: float
    names: tuple = ()


def stretch_draw(rng: np.random.Generator, a: float = STRETCH_A) -> float:
    """Stretch factor with density proportional to 1/sqrt(z) on [1/a, a]."""
    u = rng.random()
    return ((a - 1.0) * u + 1.0) ** 2 / a


def ensemble_mcmc(
    logpost,
    priors,
    walkers: int = DEFAULT_WALKERS,
    iterations: int = DEFAULT_ITERATIONS,
    burn_in: float = DEFAULT_BURN_IN,
    rng: np.random.Generator | None = None,
    a: float = STRETCH_A,
    names=None,
) -> PosteriorSamples:
    """Affine-invariant ensemble sampler with stretch moves.

    Walkers start at prior draws and advance one at a time: walker k
    proposes Y = X_j + z (X_k - X_j) against a random other walker j with
    z drawn from the 1/sqrt(z) density on [1/a, a], accepted with
    probability min(1, z^(d-1) exp(delta log posterior)).  The first
    burn_in fraction of iterations is discarded.
    """
    d = len(priors)
    if walkers < 2 * (d + 1):
        raise ValueError(f"need at least {2 * (d + 1)} walkers for {d} dimensions")
    if iterations < 2:
        raise ValueError("need at least 2 iterations")
    if not 0.0 <= burn_in < 1.0:
        raise ValueError("burn_in fraction must be in [0, 1)")
    if rng is None:
        raise ValueError("an explicit generator is required")

    state = np.empty((walkers, d))
    for j, prior in enumerate(priors):
        state[:, j] = prior.sample(rng, walkers)
    logp = np.array([logpost(state[k]) for k in range(walkers)])
    if not np.any(np.isfinite(logp)):
        raise ValueError("log posterior is -inf at every initial walker")

    chain = np.empty((iterations, walkers, d))
    accepted = 0
    for it in range(iterations):
        for k in range(walkers):
            j = int(rng.integers(walkers - 1))
            if j >= k:
                j += 1
            z = stretch_draw(rng, a)
            proposal = state[j] + z * (state[k] - state[j])
            lp_new = logpost(proposal)
            log_ratio = (d - 1) * math.log(z) + lp_new - logp[k]
            if log_ratio >= 0.0 or rng.random() < math.exp(log_ratio):
                state[k] = proposal
                logp[k] = lp_new
                accepted += 1
        chain[it] = state
    n_burn = int(burn_in * iterations)
    draws = chain[n_burn:].reshape(-1, d)
    return PosteriorSamples(
        draws=draws,
        walkers=walkers,
        iterations=iterations,
        burn_in=burn_in,
        acceptance_rate=accepted / (walkers * iterations),
        names=tuple(names) if names else tuple(f"x{j + 1}" for j in range(d)),
    )


def posterior_summary(samples: PosteriorSamples):
    """Per-parameter mean and equal-tailed 95% credible interval."""
    if samples.draws.size == 0:
        raise ValueError("empty sample set")
    lo, hi = np.percentile(samples.draws, [2.5, 97.5], axis=0)
    means = samples.draws.mean(axis=0)
    return [
        {"name": samples.names[j], "mean": float(means[j]),
         "ci_low": float(lo[j]), "ci_high": float(hi[j])}
        for j in range(samples.draws.shape[1])
    ]


# ---------------------------------------------------------------------------
# Observation files: time nodes in column 1, one observation per later column


def save_observations(path, times, observations) -> None:
    observations = np.atleast_2d(np.asarray(observations, dtype=float))
    times = np.asarray(times, dtype=float)
    with open(path, "w", encoding="utf-8") as fh:
        header = ["t"] + [f"obs{i + 1}" for i in range(observations.shape[0])]
        fh.write(",".join(header) + "\n")
        for j in range(times.size):
            row = [FLOAT_FMT % times[j]] + [FLOAT_FMT % observations[i, j]
                                            for i in range(observations.shape[0])]
            fh.write(",".join(row) + "\n")


def load_observations(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times = data[:, 0]
    observations = data[:, 1:].T
    if observations.shape[0] == 0:
        raise ValueError("observation file contains no observation columns")
    return times, observations
