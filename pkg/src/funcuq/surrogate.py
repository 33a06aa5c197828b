"""Assembly of latent-space surrogates: a functional (or plain PCA)
reducer plus one Kriging model per retained score, curve-level mean and
variance prediction, cross-validation, and a versioned text model file.
"""

from __future__ import annotations

import json
import os
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import fpca
from .basis import BSPLINE, FOURIER
from .core import ResponseEnsemble, TimeGrid, make_rng, model_nrmse
from .fpca import FunctionalReducer, select_m
from .kriging import KrigingModel, _cho_with_jitter, _kernel_matrix, fit_kriging
from scipy.linalg import cho_solve

FORMAT_VERSION = "funcuq-surrogate-v1"

KFDR_F = "kfdr-f"
KFDR_B = "kfdr-b"
PCA = "pca"
REDUCERS = (KFDR_F, KFDR_B, PCA)


@dataclass
class FitConfig:
    """Settings for one surrogate fit; defaults match the study pipeline."""

    reducer: str = KFDR_B
    n_b0: int | None = None
    order: int = 4
    delta_r: float = 0.05
    n_tau: int = 25
    tau_override: float | None = None
    mirror: bool | None = None
    nb_override: int | None = None
    n_starts: int = 10
    budget: int = 400
    fix_nugget: float | None = None

    def __post_init__(self):
        if self.reducer not in REDUCERS:
            raise ValueError(f"reducer must be one of {REDUCERS}, got {self.reducer!r}")


@dataclass
class PcaReducer:
    """Plain PCA of response vectors: baseline reducer with orthonormal
    Euclidean components and 99% retained variance."""

    grid: TimeGrid
    mean_curve: np.ndarray
    components: np.ndarray = field(repr=False)  # (n_t, m)
    eigenvalues: np.ndarray
    m: int
    variance_fraction: float

    def basis_curves(self) -> np.ndarray:
        return self.components

    def project(self, y_star) -> np.ndarray:
        y_star = np.asarray(y_star, dtype=float)
        if y_star.shape != (self.grid.n_t,):
            raise ValueError(f"expected curve of length {self.grid.n_t}")
        return self.components.T @ (y_star - self.mean_curve)

    def project_rows(self, curves) -> np.ndarray:
        curves = np.atleast_2d(np.asarray(curves, dtype=float))
        return (curves - self.mean_curve) @ self.components

    def reconstruct(self, xi) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        if xi.shape != (self.m,):
            raise ValueError(f"expected score vector of length {self.m}")
        return self.mean_curve + self.components @ xi


def fit_pca_reducer(ensemble: ResponseEnsemble):
    """PCA of the centered response matrix via SVD; returns (reducer, scores)."""
    if ensemble.n < 2:
        raise ValueError("need at least 2 curves")
    Y = ensemble.responses
    mean_curve = Y.mean(axis=0)
    centered = Y - mean_curve
    _, svals, Vt = np.linalg.svd(centered, full_matrices=False)
    lam = svals**2 / (ensemble.n - 1)
    total = lam.sum()
    scale = float(np.max(np.abs(Y))) if Y.size else 0.0
    if total <= 1e-14 * max(1.0, scale**2):
        reducer = PcaReducer(
            grid=ensemble.grid,
            mean_curve=mean_curve,
            components=np.zeros((ensemble.grid.n_t, 0)),
            eigenvalues=np.clip(lam, 0.0, None),
            m=0,
            variance_fraction=1.0,
        )
        return reducer, np.zeros((ensemble.n, 0))
    m = select_m(np.clip(lam, 0.0, None))
    components = fpca._fix_signs(Vt[:m].T.copy())
    scores = centered @ components
    reducer = PcaReducer(
        grid=ensemble.grid,
        mean_curve=mean_curve,
        components=components,
        eigenvalues=np.clip(lam, 0.0, None),
        m=m,
        variance_fraction=float(lam[:m].sum() / total),
    )
    return reducer, scores


class LatentSurrogate:
    """A reducer plus one Kriging model per latent score.

    All score models share the input normalization derived from the
    training inputs, so curve-level predictions are consistent affine
    images of the latent predictions.
    """

    def __init__(self, reducer, models, input_lo, input_hi, metadata=None):
        if len(models) != reducer.m:
            raise ValueError(f"need {reducer.m} score models, got {len(models)}")
        for mod in models:
            if not (
                np.array_equal(mod.input_lo, input_lo)
                and np.array_equal(mod.input_hi, input_hi)
            ):
                raise ValueError("score models disagree on input normalization")
        self.reducer = reducer
        self.models = list(models)
        self.input_lo = np.asarray(input_lo, dtype=float)
        self.input_hi = np.asarray(input_hi, dtype=float)
        self.metadata = dict(metadata or {})
        self._phi = reducer.basis_curves()

    @property
    def grid(self) -> TimeGrid:
        return self.reducer.grid

    @property
    def m(self) -> int:
        return self.reducer.m

    def predict_scores(self, X_star, with_var: bool = True):
        """Latent predictive means (and variances) for raw input rows."""
        X_star = np.atleast_2d(np.asarray(X_star, dtype=float))
        means = np.empty((X_star.shape[0], self.m))
        var = np.empty((X_star.shape[0], self.m)) if with_var else None
        for j, mod in enumerate(self.models):
            mj, vj = mod.predict_batch(X_star, with_var=with_var)
            means[:, j] = mj
            if with_var:
                var[:, j] = vj
        return means, var

    def predict_curve(self, x_star):
        """Predictive mean and variance curves at one input point.

        The latent predictive covariance is diagonal, so the variance at
        each time node is the squared latent-function row weighted by the
        per-score variances.
        """
        means, var = self.predict_scores(np.atleast_2d(x_star))
        mean_curve = self.reducer.mean_curve + self._phi @ means[0]
        var_curve = (self._phi**2) @ var[0]
        return mean_curve, var_curve

    def predict_mean_curves(self, X_star) -> np.ndarray:
        """Predictive mean curves for raw input rows; shape (M, n_t)."""
        means, _ = self.predict_scores(X_star, with_var=False)
        return self.reducer.mean_curve + means @ self._phi.T


def fit_surrogate(
    ensemble: ResponseEnsemble,
    config: FitConfig | None = None,
    rng: np.random.Generator | None = None,
) -> LatentSurrogate:
    """Fit a latent surrogate: reduce the curves, then fit one Kriging
    model per retained score on the training inputs."""
    config = config or FitConfig()
    rng = rng if rng is not None else make_rng(0)
    if ensemble.n < 2 * ensemble.p:
        warnings.warn(
            f"only {ensemble.n} samples for {ensemble.p} input dimensions; "
            "surrogate accuracy may suffer",
            stacklevel=2,
        )
    t_start = time.perf_counter()
    nb_trace: list = []
    if config.reducer == PCA:
        reducer, scores = fit_pca_reducer(ensemble)
    else:
        kind = FOURIER if config.reducer == KFDR_F else BSPLINE
        reducer, scores = fpca.fit_reducer(
            ensemble,
            kind=kind,
            order=config.order,
            n_b0=config.n_b0,
            delta_r=config.delta_r,
            n_tau=config.n_tau,
            tau_override=config.tau_override,
            mirror=config.mirror,
            nb_override=config.nb_override,
            nb_trace=nb_trace,
        )
    lo, hi = ensemble.inputs.min(axis=0), ensemble.inputs.max(axis=0)
    model_seeds = rng.integers(0, 2**63 - 1, size=max(reducer.m, 1))
    models = [
        fit_kriging(
            ensemble.inputs,
            scores[:, j],
            make_rng(model_seeds[j]),
            n_starts=config.n_starts,
            budget=config.budget,
            fix_nugget=config.fix_nugget,
            input_bounds=(lo, hi),
        )
        for j in range(reducer.m)
    ]
    metadata = {
        "reducer": config.reducer,
        "n_train": ensemble.n,
        "p": ensemble.p,
        "input_names": list(ensemble.input_names),
        "timing_s": time.perf_counter() - t_start,
    }
    if nb_trace:
        metadata["nb_trace"] = nb_trace
    return LatentSurrogate(reducer, models, lo, hi, metadata)


def fit_pca_baseline(
    ensemble: ResponseEnsemble,
    rng: np.random.Generator | None = None,
    config: FitConfig | None = None,
) -> LatentSurrogate:
    """PCA-reducer surrogate with the same Kriging stage as the main path."""
    base = config or FitConfig()
    cfg = FitConfig(
        reducer=PCA,
        n_starts=base.n_starts,
        budget=base.budget,
        fix_nugget=base.fix_nugget,
    )
    return fit_surrogate(ensemble, cfg, rng)


def cross_validate(
    ensemble: ResponseEnsemble,
    k: int,
    config: FitConfig | None = None,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Per-fold test errors from seeded k-fold cross-validation.

    Folds are contiguous blocks of a seeded permutation, so the split is
    replayable from the generator state alone.
    """
    if k < 2:
        raise ValueError("need at least 2 folds")
    if ensemble.n < k:
        raise ValueError(f"cannot split {ensemble.n} samples into {k} folds")
    rng = rng if rng is not None else make_rng(0)
    perm = rng.permutation(ensemble.n)
    folds = np.array_split(perm, k)
    fit_seeds = rng.integers(0, 2**63 - 1, size=k)
    errors = np.empty(k)
    for i, fold in enumerate(folds):
        train = np.setdiff1d(perm, fold)
        if train.size < 2:
            raise ValueError("fold leaves fewer than 2 training samples")
        sub = ResponseEnsemble(
            ensemble.inputs[train],
            ensemble.responses[train],
            ensemble.grid,
            input_names=ensemble.input_names,
        )
        sur = fit_surrogate(sub, config, make_rng(fit_seeds[i]))
        pred = sur.predict_mean_curves(ensemble.inputs[fold])
        errors[i] = model_nrmse(ensemble.responses[fold], pred)
    return errors


def _array(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def surrogate_to_dict(s: LatentSurrogate) -> dict:
    """JSON-ready description of a fitted surrogate.

    Volatile metadata (timing) is dropped so that refitting with the same
    seed reproduces the file byte for byte.
    """
    reducer = s.reducer
    grid = {"t0": reducer.grid.t0, "te": reducer.grid.te, "n_t": reducer.grid.n_t}
    if isinstance(reducer, PcaReducer):
        red = {
            "kind": "pca",
            "mean_curve": _array(reducer.mean_curve),
            "components": _array(reducer.components),
            "eigenvalues": _array(reducer.eigenvalues),
            "m": reducer.m,
            "variance_fraction": reducer.variance_fraction,
        }
    else:
        red = {
            "kind": "fdr",
            "basis": {
                "kind": reducer.basis.kind,
                "n_b": reducer.basis.n_b,
                "order": reducer.basis.order,
            },
            "tau": reducer.tau,
            "mirror": reducer.mirror,
            "mean_curve": _array(reducer.mean_curve),
            "B": _array(reducer.B),
            "eigenvalues": _array(reducer.eigenvalues),
            "m": reducer.m,
            "variance_fraction": reducer.variance_fraction,
        }
    models = [
        {
            "input_lo": _array(mod.input_lo),
            "input_hi": _array(mod.input_hi),
            "X_norm": _array(mod.X_norm),
            "y_std": _array(mod.y_std),
            "y_offset": mod.y_offset,
            "y_scale": mod.y_scale,
            "mu": mod.mu,
            "sigma_z2": mod.sigma_z2,
            "theta": _array(mod.theta),
            "sigma_n2": mod.sigma_n2,
        }
        for mod in s.models
    ]
    metadata = {k: v for k, v in s.metadata.items() if k != "timing_s"}
    return {
        "format": FORMAT_VERSION,
        "grid": grid,
        "reducer": red,
        "models": models,
        "input_lo": _array(s.input_lo),
        "input_hi": _array(s.input_hi),
        "metadata": metadata,
    }


def save_surrogate(s: LatentSurrogate, path) -> None:
    """Write the surrogate as deterministic JSON text."""
    payload = json.dumps(surrogate_to_dict(s), sort_keys=True, separators=(",", ":"))
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(payload + "\n")
    os.replace(tmp, path)


def _rebuild_kriging(d: dict) -> KrigingModel:
    Xn = np.asarray(d["X_norm"], dtype=float)
    ys = np.asarray(d["y_std"], dtype=float)
    theta = np.asarray(d["theta"], dtype=float)
    A = _kernel_matrix(d["sigma_z2"], theta, Xn)
    A[np.diag_indices_from(A)] += d["sigma_n2"]
    cho = _cho_with_jitter(A)
    alpha = cho_solve(cho, ys - d["mu"])
    return KrigingModel(
        input_lo=np.asarray(d["input_lo"], dtype=float),
        input_hi=np.asarray(d["input_hi"], dtype=float),
        X_norm=Xn,
        y_std=ys,
        y_offset=d["y_offset"],
        y_scale=d["y_scale"],
        mu=d["mu"],
        sigma_z2=d["sigma_z2"],
        theta=theta,
        sigma_n2=d["sigma_n2"],
        _cho=cho,
        _alpha=alpha,
    )


def surrogate_from_dict(doc: dict) -> LatentSurrogate:
    if doc.get("format") != FORMAT_VERSION:
        raise ValueError(f"unsupported model-file format {doc.get('format')!r}")
    grid = TimeGrid(doc["grid"]["t0"], doc["grid"]["te"], doc["grid"]["n_t"])
    red = doc["reducer"]
    if red["kind"] == "pca":
        reducer = PcaReducer(
            grid=grid,
            mean_curve=np.asarray(red["mean_curve"], dtype=float),
            components=np.asarray(red["components"], dtype=float).reshape(
                grid.n_t, red["m"]
            ),
            eigenvalues=np.asarray(red["eigenvalues"], dtype=float),
            m=red["m"],
            variance_fraction=red["variance_fraction"],
        )
    else:
        from .basis import BasisSystem, design_matrix, gram_matrix, roughness_matrix
        from .smoothing import PenalizedSolver

        b = red["basis"]
        mirror = red["mirror"]
        if mirror:
            n_fit = 2 * grid.n_t - 2
            nodes = grid.t0 + grid.dt * np.arange(n_fit)
            interval = (grid.t0, grid.t0 + 2.0 * grid.span)
        else:
            nodes = grid.nodes
            interval = (grid.t0, grid.te)
        sys = BasisSystem(b["kind"], b["n_b"], *interval, order=b["order"])
        H = design_matrix(sys, nodes)
        R = roughness_matrix(sys)
        W = gram_matrix(sys)
        W_half, W_half_inv = fpca._matrix_sqrt(W)
        reducer = FunctionalReducer(
            grid=grid,
            basis=sys,
            tau=red["tau"],
            mirror=mirror,
            mean_curve=np.asarray(red["mean_curve"], dtype=float),
            H=H,
            R=R,
            W=W,
            W_half=W_half,
            W_half_inv=W_half_inv,
            B=np.asarray(red["B"], dtype=float).reshape(b["n_b"], red["m"]),
            eigenvalues=np.asarray(red["eigenvalues"], dtype=float),
            m=red["m"],
            variance_fraction=red["variance_fraction"],
            _solver=PenalizedSolver(H, R, red["tau"]),
        )
    models = [_rebuild_kriging(d) for d in doc["models"]]
    return LatentSurrogate(
        reducer,
        models,
        np.asarray(doc["input_lo"], dtype=float),
        np.asarray(doc["input_hi"], dtype=float),
        doc.get("metadata", {}),
    )


def load_surrogate(path) -> LatentSurrogate:
    with open(path, "r", encoding="utf-8") as fh:
        return surrogate_from_dict(json.load(fh))
