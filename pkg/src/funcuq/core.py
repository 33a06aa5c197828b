"""Shared numerical primitives: time grids, response ensembles, error
metrics, Latin hypercube designs, seeded randomness, and the periodic
mirroring preprocessor.

All functions are pure; random state is always passed in explicitly.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np

# Counter-based generator fixed for the whole toolkit so every stochastic
# result replays from a single seed.
GENERATOR_NAME = "philox"

FLOAT_FMT = "%.10g"


def make_rng(seed: int) -> np.random.Generator:
    """Build the toolkit-wide Philox generator for a seed."""
    return np.random.Generator(np.random.Philox(int(seed)))


def derive_seed(master: int, label: str) -> int:
    """Derive a named 63-bit sub-seed from a master seed.

    Uses SHA-256 of ``"<master>/<label>"`` so each component of a run
    (data, folds, optimizer starts, samplers) is reseeded independently
    of evaluation order or platform.
    """
    digest = hashlib.sha256(f"{int(master)}/{label}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


@dataclass(frozen=True)
class RandomSource:
    """A seed and the fixed generator algorithm; same seed, same stream."""

    seed: int
    algorithm: str = GENERATOR_NAME

    def generator(self) -> np.random.Generator:
        if self.algorithm != GENERATOR_NAME:
            raise ValueError(f"unsupported generator algorithm {self.algorithm!r}")
        return make_rng(self.seed)

    def derive(self, label: str) -> "RandomSource":
        return RandomSource(derive_seed(self.seed, label), self.algorithm)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid with nodes t_j = t0 + (j-1) (te-t0)/(n_t-1)."""

    t0: float
    te: float
    n_t: int

    def __post_init__(self):
        if not np.isfinite(self.t0) or not np.isfinite(self.te):
            raise ValueError("grid endpoints must be finite")
        if not self.te > self.t0:
            raise ValueError(f"te must exceed t0, got [{self.t0}, {self.te}]")
        if self.n_t < 2:
            raise ValueError(f"need at least 2 nodes, got {self.n_t}")

    @property
    def span(self) -> float:
        return self.te - self.t0

    @property
    def dt(self) -> float:
        return (self.te - self.t0) / (self.n_t - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.t0, self.te, self.n_t)


class ResponseEnsemble:
    """N input samples paired with N discretized response curves.

    Parameters
    ----------
    inputs : array-like of shape (N, p)
        Input samples, one row per realization.
    responses : array-like of shape (N, n_t)
        Curve samples on the shared grid, one row per realization.
    grid : TimeGrid
        The common uniform time grid.
    input_names : sequence of str, optional
        Column names for the inputs; defaults to x1..xp.
    """

    def __init__(self, inputs, responses, grid: TimeGrid, input_names=None):
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        responses = np.atleast_2d(np.asarray(responses, dtype=float))
        if inputs.shape[0] != responses.shape[0]:
            raise ValueError(
                f"row mismatch: {inputs.shape[0]} inputs vs "
                f"{responses.shape[0]} responses"
            )
        if responses.shape[1] != grid.n_t:
            raise ValueError(
                f"responses have {responses.shape[1]} columns, grid has {grid.n_t}"
            )
        if not np.all(np.isfinite(inputs)):
            raise ValueError("non-finite input entries")
        if not np.all(np.isfinite(responses)):
            raise ValueError("non-finite response entries")
        if input_names is None:
            input_names = tuple(f"x{i + 1}" for i in range(inputs.shape[1]))
        elif len(input_names) != inputs.shape[1]:
            raise ValueError("input_names length does not match input columns")
        self.inputs = inputs
        self.responses = responses
        self.grid = grid
        self.input_names = tuple(input_names)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def p(self) -> int:
        return self.inputs.shape[1]


def center_ensemble(responses):
    """Subtract the across-sample mean curve from every response row.

    Returns
    -------
    mean_curve : ndarray of shape (n_t,)
    centered : ndarray of shape (N, n_t)
    """
    responses = np.atleast_2d(np.asarray(responses, dtype=float))
    if responses.shape[0] < 1 or responses.size == 0:
        raise ValueError("empty ensemble")
    mean_curve = responses.mean(axis=0)
    return mean_curve, responses - mean_curve


def nrmse_curve(y, y_hat) -> float:
    """Range-normalized l2 error between one curve and its estimate.

    Computes ||y - y_hat||_2 / (max y - min y); no 1/sqrt(n_t) factor.
    """
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {y_hat.shape}")
    span = y.max() - y.min()
    if span <= 0.0:
        raise ValueError("curve has zero range; NRMSE undefined")
    return float(np.linalg.norm(y - y_hat) / span)


def model_nrmse(truth, pred) -> float:
    """Test-set error: per-curve RMS over time divided by curve range,
    averaged over all curves.
    """
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    if truth.shape != pred.shape:
        raise ValueError(f"shape mismatch: {truth.shape} vs {pred.shape}")
    spans = truth.max(axis=1) - truth.min(axis=1)
    if np.any(spans <= 0.0):
        raise ValueError("constant truth curve; NRMSE undefined")
    rms = np.sqrt(np.mean((truth - pred) ** 2, axis=1))
    return float(np.mean(rms / spans))


def latin_hypercube(n: int, p: int, bounds, rng: np.random.Generator):
    """Latin hypercube design: one sample in each of n equal strata per dim.

    Parameters
    ----------
    n : int
        Number of samples (>= 1).
    p : int
        Number of dimensions.
    bounds : sequence of (lower, upper) pairs, length p.
    rng : numpy Generator.

    Returns
    -------
    ndarray of shape (n, p)
    """
    if n < 1:
        raise ValueError("need n >= 1")
    bounds = np.asarray(bounds, dtype=float).reshape(p, 2)
    if np.any(bounds[:, 0] >= bounds[:, 1]):
        raise ValueError("each lower bound must be below its upper bound")
    out = np.empty((n, p))
    for j in range(p):
        strata = (rng.permutation(n) + rng.random(n)) / n
        lo, hi = bounds[j]
        out[:, j] = lo + strata * (hi - lo)
    return out


def mirror_periodic(curve):
    """Reflect a sampled curve about its endpoint to one full period.

    [y_1..y_n] becomes [y_1..y_n, y_{n-1}..y_2]; appending the first sample
    after the last closes a continuous periodic extension with period
    2 (te - t0) and no repeated samples.
    """
    curve = np.asarray(curve, dtype=float)
    if curve.ndim != 1 or curve.size < 2:
        raise ValueError("need a 1-D curve with at least 2 samples")
    return np.concatenate([curve, curve[-2:0:-1]])


def mirror_rows(curves):
    """Apply mirror_periodic to every row of a 2-D array."""
    curves = np.atleast_2d(np.asarray(curves, dtype=float))
    return np.concatenate([curves, curves[:, -2:0:-1]], axis=1)


def _replace_with(path, lines) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def save_ensemble(ens: ResponseEnsemble, responses_path, inputs_path) -> None:
    """Write an ensemble as two CSV files (atomically: temp + rename).

    responses CSV: first row = time nodes, subsequent rows = curves.
    inputs CSV: header row with column names, then one row per sample.
    """
    lines = [",".join(FLOAT_FMT % t for t in ens.grid.nodes)]
    lines += [",".join(FLOAT_FMT % v for v in row) for row in ens.responses]
    _replace_with(responses_path, lines)
    lines = [",".join(ens.input_names)]
    lines += [",".join(FLOAT_FMT % v for v in row) for row in ens.inputs]
    _replace_with(inputs_path, lines)


def load_ensemble(responses_path, inputs_path) -> ResponseEnsemble:
    """Read an ensemble written by save_ensemble."""
    resp = np.loadtxt(responses_path, delimiter=",", ndmin=2)
    times, curves = resp[0], resp[1:]
    with open(inputs_path, "r", encoding="utf-8") as fh:
        names = tuple(fh.readline().strip().split(","))
    inputs = np.loadtxt(inputs_path, delimiter=",", skiprows=1, ndmin=2)
    grid = TimeGrid(float(times[0]), float(times[-1]), times.size)
    return ResponseEnsemble(inputs, curves, grid, input_names=names)
