"""Config-driven command line: dataset generation, surrogate fitting,
error-vs-training-size studies, forward Monte Carlo UQ, and Bayesian
inverse UQ, all emitting plot-ready CSV tables.

Every command is a deterministic function of (config, seed): a master seed
fans out to named sub-seeds, and floats are printed with 10 significant
digits, so reruns reproduce output files byte for byte.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import os
import sys
import time

import numpy as np

from . import bench, uq
from .core import FLOAT_FMT, ResponseEnsemble, derive_seed, load_ensemble, make_rng, model_nrmse, save_ensemble
from .surrogate import (
    FitConfig,
    LatentSurrogate,
    fit_surrogate,
    load_surrogate,
    save_surrogate,
)

DEFAULT_CONFIG = {
    "model": None,
    "seed": 0,
    "out_dir": ".",
    "dataset": {
        "inputs": None,
        "responses": None,
        "n_train": 100,
        "noise_std": 0.0,
        "substeps": bench.DEFAULT_SUBSTEPS,
    },
    "basis": {"kind": "bspline", "n_b0": None, "order": 4, "mirror": None},
    "smoothing": {"n_tau": 25, "delta_r": 0.05, "n_b0": None, "tau_override": None},
    "kriging": {"n_starts": 10, "budget": 400, "fix_nugget": None},
    "surrogate": {"reducer": "kfdr-b"},
    "study": {
        "train_sizes": [100],
        "repetitions": 10,
        "test_size": 1000,
        "noise_std": 0.0,
        "methods": ["kfdr-f", "kfdr-b", "pca"],
    },
    "forward": {
        "model_file": None,
        "use_exact_model": False,
        "distributions": [],
        "n_mcs": 100_000,
        "kde_points": 512,
    },
    "inverse": {
        "model_file": None,
        "use_exact_model": False,
        "observations": None,
        "priors": [],
        "sigma_prior": None,
        "fixed": {},
        "walkers": 100,
        "iterations": 300,
        "burn_in": 0.5,
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path=None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    with open(path, "r", encoding="utf-8") as fh:
        user = json.load(fh)
    unknown = set(user) - set(DEFAULT_CONFIG)
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    return _merge(DEFAULT_CONFIG, user)


def _fmt(value) -> str:
    return FLOAT_FMT % float(value)


def _write_atomic(path, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(row) for row in rows]
    _write_atomic(path, "\n".join(lines) + "\n")


def _fit_config(cfg: dict) -> FitConfig:
    n_b0 = cfg["smoothing"]["n_b0"]
    if n_b0 is None:
        n_b0 = cfg["basis"]["n_b0"]
    return FitConfig(
        reducer=cfg["surrogate"]["reducer"],
        n_b0=n_b0,
        order=cfg["basis"]["order"],
        delta_r=cfg["smoothing"]["delta_r"],
        n_tau=cfg["smoothing"]["n_tau"],
        tau_override=cfg["smoothing"]["tau_override"],
        mirror=cfg["basis"]["mirror"],
        n_starts=cfg["kriging"]["n_starts"],
        budget=cfg["kriging"]["budget"],
        fix_nugget=cfg["kriging"]["fix_nugget"],
    )


def _load_training_data(cfg: dict, seed: int) -> ResponseEnsemble:
    ds = cfg["dataset"]
    if ds["inputs"] and ds["responses"]:
        for path in (ds["inputs"], ds["responses"]):
            if not os.path.exists(path):
                raise FileNotFoundError(f"dataset file not found: {path}")
        return load_ensemble(ds["responses"], ds["inputs"])
    if cfg["model"] is None:
        raise ValueError("config needs either dataset paths or a model name")
    return bench.generate_dataset(
        cfg["model"],
        ds["n_train"],
        make_rng(derive_seed(seed, "data/train")),
        noise_std=ds["noise_std"],
        substeps=ds["substeps"],
    )


_DIST_KINDS = {"normal": uq.Normal, "lognormal": uq.Lognormal, "uniform": uq.Uniform}


def _build_marginal(entry: dict):
    kind = entry.get("dist")
    if kind not in _DIST_KINDS:
        raise ValueError(f"unknown distribution kind {kind!r}")
    if kind == "uniform":
        return uq.Uniform(entry["lower"], entry["upper"])
    return _DIST_KINDS[kind](entry["mean"], entry["std"])


def _check_names(given, expected, what: str) -> None:
    if list(given) != list(expected):
        raise ValueError(
            f"{what} names {list(given)} do not match model parameters {list(expected)}"
        )


def _forward_model(cfg: dict, section: str):
    """Return (model, grid, param_names) for forward/inverse runs."""
    sec = cfg[section]
    if sec["use_exact_model"]:
        model_name = cfg["model"]
        if model_name not in bench.MODEL_GRIDS:
            raise ValueError("use_exact_model requires a known model name")
        grid = bench.MODEL_GRIDS[model_name]
        solver = bench.duffing_batch if model_name == bench.DUFFING else bench.boucwen_batch
        substeps = cfg["dataset"]["substeps"]

        def hook(X):
            return solver(np.atleast_2d(X), grid, substeps)

        return hook, grid, bench.MODEL_NAMES[model_name]
    path = sec["model_file"]
    if not path:
        raise ValueError(f"{section} needs model_file or use_exact_model")
    if not os.path.exists(path):
        raise FileNotFoundError(f"model file not found: {path}")
    sur = load_surrogate(path)
    names = tuple(sur.metadata.get("input_names", ()))
    return sur, sur.grid, names


# ---------------------------------------------------------------------------
# Commands


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    model = args.model or cfg["model"]
    if model is None:
        raise ValueError("generate needs --model or a model in the config")
    n = args.n if args.n is not None else cfg["dataset"]["n_train"]
    noise = args.noise if args.noise is not None else cfg["dataset"]["noise_std"]
    seed = args.seed if args.seed is not None else cfg["seed"]
    out_dir = args.out or cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    ens = bench.generate_dataset(
        model, n, make_rng(derive_seed(seed, "data/train")), noise_std=noise,
        substeps=cfg["dataset"]["substeps"],
    )
    save_ensemble(
        ens,
        os.path.join(out_dir, "responses.csv"),
        os.path.join(out_dir, "inputs.csv"),
    )
    print(f"wrote {n} {model} samples to {out_dir}")
    return 0


def _fit_report(sur: LatentSurrogate, seed: int, elapsed: float) -> dict:
    reducer = sur.reducer
    report = {
        "reducer": sur.metadata.get("reducer"),
        "n_train": sur.metadata.get("n_train"),
        "seed": seed,
        "m": reducer.m,
        "variance_fraction": reducer.variance_fraction,
        "eigenvalues": np.asarray(reducer.eigenvalues[: max(reducer.m, 1)]).tolist(),
        "kriging": [
            {
                "mu": mod.mu,
                "sigma_z2": mod.sigma_z2,
                "theta": mod.theta.tolist(),
                "sigma_n2": mod.sigma_n2,
            }
            for mod in sur.models
        ],
        "timing_s": elapsed,
    }
    if hasattr(reducer, "basis"):
        report["n_b"] = reducer.basis.n_b
        report["tau"] = reducer.tau
        report["basis_kind"] = reducer.basis.kind
    return report


def cmd_fit(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seed"]
    out_dir = args.out or cfg["out_dir"]
    ens = _load_training_data(cfg, seed)
    t0 = time.perf_counter()
    sur = fit_surrogate(ens, _fit_config(cfg), make_rng(derive_seed(seed, "fit")))
    elapsed = time.perf_counter() - t0
    os.makedirs(out_dir, exist_ok=True)
    save_surrogate(sur, os.path.join(out_dir, "model.json"))
    report = _fit_report(sur, seed, elapsed)
    _write_atomic(
        os.path.join(out_dir, "fit_report.json"),
        json.dumps(report, sort_keys=True, indent=2) + "\n",
    )
    print(f"fitted {report['reducer']} surrogate: m={report['m']}"
          + (f", n_b={report['n_b']}, tau={report['tau']:g}" if "n_b" in report else ""))
    return 0


def cmd_predict(args) -> int:
    cfg = load_config(args.config)
    out_dir = args.out or cfg["out_dir"]
    model_path = args.model_file or cfg["forward"]["model_file"]
    inputs_path = args.inputs
    if not model_path or not inputs_path:
        raise ValueError("predict needs --model-file and --inputs")
    for path in (model_path, inputs_path):
        if not os.path.exists(path):
            raise FileNotFoundError(f"file not found: {path}")
    sur = load_surrogate(model_path)
    X = np.loadtxt(inputs_path, delimiter=",", skiprows=1, ndmin=2)
    nodes = sur.grid.nodes
    means = np.empty((X.shape[0], sur.grid.n_t))
    stds = np.empty_like(means)
    for i in range(X.shape[0]):
        mean, var = sur.predict_curve(X[i])
        means[i] = mean
        stds[i] = np.sqrt(var)
    os.makedirs(out_dir, exist_ok=True)
    for name, table in (("predictions.csv", means), ("predictions_std.csv", stds)):
        rows = [[_fmt(v) for v in row] for row in table]
        _write_csv(os.path.join(out_dir, name), [_fmt(t) for t in nodes], rows)
    print(f"wrote predictions for {X.shape[0]} inputs to {out_dir}")
    return 0


def cmd_study(args) -> int:
    cfg = load_config(args.config)
    if cfg["model"] is None:
        raise ValueError("study needs a model in the config")
    seed = args.seed if args.seed is not None else cfg["seed"]
    out_dir = args.out or cfg["out_dir"]
    st = cfg["study"]
    substeps = cfg["dataset"]["substeps"]

    test = bench.generate_dataset(
        cfg["model"], st["test_size"], make_rng(derive_seed(seed, "study/test")),
        substeps=substeps,
    )
    base = _fit_config(cfg)
    rows = []
    for n_train in st["train_sizes"]:
        for rep in range(st["repetitions"]):
            train = bench.generate_dataset(
                cfg["model"],
                n_train,
                make_rng(derive_seed(seed, f"study/train/n{n_train}/rep{rep}")),
                noise_std=st["noise_std"],
                substeps=substeps,
            )
            # Identical training data and fit seed for every method within
            # a repetition, so method comparisons share all randomness.
            fit_seed = derive_seed(seed, f"study/fit/n{n_train}/rep{rep}")
            for method in st["methods"]:
                fit_cfg = dataclasses.replace(base, reducer=method)
                sur = fit_surrogate(train, fit_cfg, make_rng(fit_seed))
                err = model_nrmse(
                    test.responses, sur.predict_mean_curves(test.inputs)
                )
                rows.append([method, str(n_train), str(rep), _fmt(err)])
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(
        os.path.join(out_dir, "study.csv"),
        ["method", "n_train", "repetition", "nrmse"],
        rows,
    )
    print(f"wrote {len(rows)} study rows to {out_dir}/study.csv")
    return 0


def cmd_forward(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seed"]
    out_dir = args.out or cfg["out_dir"]
    fw = cfg["forward"]
    model, grid, names = _forward_model(cfg, "forward")
    entries = fw["distributions"]
    if not entries:
        raise ValueError("forward needs input distributions")
    if names:
        _check_names([e.get("name") for e in entries], names, "distribution")
    dist = uq.InputDistribution([_build_marginal(e) for e in entries])
    result = uq.forward_uq(
        model,
        dist,
        n_mcs=fw["n_mcs"],
        grid=grid,
        rng=make_rng(derive_seed(seed, "forward/mcs")),
        kde_points=fw["kde_points"],
    )
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(
        os.path.join(out_dir, "mean_std.csv"),
        ["t", "mean", "std"],
        [
            [_fmt(t), _fmt(m), _fmt(s)]
            for t, m, s in zip(grid.nodes, result.mean, result.std)
        ],
    )
    _write_csv(
        os.path.join(out_dir, "extremes_kde.csv"),
        ["value", "pdf_max", "pdf_min"],
        [
            [_fmt(v), _fmt(pm), _fmt(pn)]
            for v, pm, pn in zip(result.kde_grid, result.kde_max, result.kde_min)
        ],
    )
    print(f"forward UQ with {result.n_mcs} samples written to {out_dir}")
    return 0


def cmd_inverse(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg["seed"]
    out_dir = args.out or cfg["out_dir"]
    inv = cfg["inverse"]
    model, grid, names = _forward_model(cfg, "inverse")
    if not inv["observations"]:
        raise ValueError("inverse needs an observations file")
    if not os.path.exists(inv["observations"]):
        raise FileNotFoundError(f"observations file not found: {inv['observations']}")
    times, observations = uq.load_observations(inv["observations"])
    if times.size != grid.n_t:
        raise ValueError("observation grid does not match the model grid")

    entries = inv["priors"]
    if not entries:
        raise ValueError("inverse needs calibration priors")
    fixed = dict(inv["fixed"] or {})
    calibrated = [e.get("name") for e in entries]
    if names:
        expected = [n for n in names if n not in fixed]
        _check_names(calibrated, expected, "prior")
        order = {n: i for i, n in enumerate(names)}
        full = np.zeros(len(names))
        for name, value in fixed.items():
            if name not in order:
                raise ValueError(f"fixed parameter {name!r} unknown to the model")
            full[order[name]] = value
        cal_idx = np.array([order[n] for n in calibrated], dtype=int)

        def assemble(x):
            v = full.copy()
            v[cal_idx] = x
            return v

    else:
        def assemble(x):
            return np.asarray(x, dtype=float)

    priors = [_build_marginal(e) for e in entries]
    if not inv["sigma_prior"]:
        raise ValueError("inverse needs a sigma_prior range")
    sigma_prior = uq.Uniform(inv["sigma_prior"]["lower"], inv["sigma_prior"]["upper"])

    if hasattr(model, "predict_curve"):
        def mean_curve(x):
            return model.predict_curve(assemble(x))[0]
    else:
        def mean_curve(x):
            return model(assemble(x)[None, :])[0]

    def logpost(thetavec):
        return uq.log_posterior(
            mean_curve, priors, sigma_prior, observations,
            thetavec[:-1], float(thetavec[-1]),
        )

    samples = uq.ensemble_mcmc(
        logpost,
        priors + [sigma_prior],
        walkers=inv["walkers"],
        iterations=inv["iterations"],
        burn_in=inv["burn_in"],
        rng=make_rng(derive_seed(seed, "inverse/mcmc")),
        names=calibrated + ["sigma"],
    )
    summary = uq.posterior_summary(samples)
    os.makedirs(out_dir, exist_ok=True)
    _write_csv(
        os.path.join(out_dir, "posterior_draws.csv"),
        list(samples.names),
        [[_fmt(v) for v in row] for row in samples.draws],
    )
    _write_csv(
        os.path.join(out_dir, "posterior_summary.csv"),
        ["variable", "mean", "ci_low", "ci_high"],
        [
            [s["name"], _fmt(s["mean"]), _fmt(s["ci_low"]), _fmt(s["ci_high"])]
            for s in summary
        ],
    )
    print(f"acceptance rate: {samples.acceptance_rate:.4f}")
    print(f"posterior tables written to {out_dir}")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "fit": cmd_fit,
    "predict": cmd_predict,
    "study": cmd_study,
    "forward": cmd_forward,
    "inverse": cmd_inverse,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="funcuq",
        description="Latent-space Kriging surrogates and UQ for time-variant responses",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("generate", "sample a benchmark dataset to inputs.csv/responses.csv"),
        ("fit", "fit a surrogate and write model.json + fit_report.json"),
        ("predict", "predict curves for an inputs CSV with a fitted model"),
        ("study", "error-vs-training-size table across methods"),
        ("forward", "Monte Carlo forward UQ through a model"),
        ("inverse", "Bayesian calibration from observed curves"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", default=None, help="JSON config file")
        cmd.add_argument("--seed", type=int, default=None, help="master seed override")
        cmd.add_argument("--out", default=None, help="output directory override")
        if name == "generate":
            cmd.add_argument("--model", choices=sorted(bench.MODEL_GRIDS))
            cmd.add_argument("--n", type=int, default=None)
            cmd.add_argument("--noise", type=float, default=None)
        if name == "predict":
            cmd.add_argument("--model-file", dest="model_file", default=None)
            cmd.add_argument("--inputs", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except Exception as exc:  # surface module provenance, fail nonzero
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
