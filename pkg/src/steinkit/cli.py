"""Experiment runner.

Each subcommand reads a JSON config (validated against the published schema
before any computation), seeds a named random stream, dispatches to the
library, and writes ``metrics.csv`` (columns: iteration/trial index, metric
name, value), ``summary.json`` (final estimates, seed, config echo), and for
sample-producing runs ``samples.csv``.

Exit codes: 0 success, 2 config error, 3 numerical failure; failures print a
single machine-parsable line `error: <kind>: <message>` on stderr.  Numeric
CSV cells use the shortest round-trip decimal representation.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from . import aggregation, discrete, gfsvgd, gof, kernels, ksd, models, steinis, svgd
from .config_schema import CONFIG_SCHEMAS
from .errors import ConfigError, NumericalFailure
from .rngs import stream_rng

SUBCOMMANDS = tuple(CONFIG_SCHEMAS)

# fixed stream ids per role so every consumer of the master seed is named
STREAM_MODEL = 1000
STREAM_INIT = 1001
STREAM_RUN = 1002
STREAM_DATA = 1003


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


class MetricsWriter:
    def __init__(self):
        self.rows: list[tuple[int, str, float]] = []

    def add(self, index: int, metric: str, value: float) -> None:
        self.rows.append((int(index), metric, value))

    def write(self, path: Path) -> None:
        lines = ["iteration,metric,value"]
        lines += [f"{i},{m},{_fmt(v)}" for i, m, v in self.rows]
        path.write_text("\n".join(lines) + "\n")


def _write_samples(path: Path, rows: np.ndarray, integer: bool = False) -> None:
    arr = np.atleast_2d(rows)
    lines = [",".join(str(int(v)) if integer else _fmt(v) for v in row) for row in arr]
    path.write_text("\n".join(lines) + "\n")


def _read_state_csv(path: str) -> np.ndarray:
    rows = []
    for line in Path(path).read_text().strip().splitlines():
        rows.append([int(tok) for tok in line.split(",")])
    return np.asarray(rows, dtype=int)


def validate_config(subcommand: str, config: dict) -> None:
    try:
        jsonschema.validate(config, CONFIG_SCHEMAS[subcommand])
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from exc


# ---------------------------------------------------------------------------
# Config -> library object builders
# ---------------------------------------------------------------------------

def build_kernel(spec: Optional[dict]) -> kernels.KernelSpec:
    spec = spec or {}
    return kernels.KernelSpec(bandwidth=spec.get("bandwidth", "median-heuristic"))


def build_schedule(spec: Optional[dict]) -> svgd.StepSchedule:
    spec = spec or {}
    return svgd.StepSchedule(
        mode=spec.get("mode", "adam"),
        eps=spec.get("eps", 0.05),
        beta1=spec.get("beta1", 0.9),
        beta2=spec.get("beta2", 0.999),
        delta=spec.get("delta", 1e-8),
        decay_exponent=spec.get("decay_exponent", 0.5),
    )


def _gmm_model(weights, means, sigma, log_scale=0.0, normalized=False) -> models.ContinuousTarget:
    base = models.gmm_target(weights, means, sigma)
    const = float(log_scale)
    if normalized:
        d = np.atleast_2d(means).shape[1]
        const -= 0.5 * d * np.log(2.0 * np.pi * sigma)
    if const == 0.0:
        return base
    return models.ContinuousTarget(
        dim=base.dim,
        log_density=lambda x, _c=const: base.log_density(x) + _c,
        score=base.score,
    )


def build_continuous_model(spec: dict, seed: int) -> models.ContinuousTarget:
    kind = spec["type"]
    if kind == "gaussian":
        return models.gaussian_target(np.asarray(spec["mu"], dtype=float), spec["sigma"])
    if kind == "gmm":
        return _gmm_model(spec["weights"], spec["means"], spec["sigma"],
                          spec.get("log_scale", 0.0), spec.get("normalized", False))
    if kind == "gmm-random":
        rng = stream_rng(seed, STREAM_MODEL)
        m = spec["components"]
        means = rng.uniform(spec.get("low", -1.0), spec.get("high", 1.0), size=(m, spec["dim"]))
        return _gmm_model(np.full(m, 1.0 / m), means, spec.get("sigma", 1.0),
                          spec.get("log_scale", 0.0), spec.get("normalized", False))
    if kind == "gauss-bernoulli-rbm":
        params = models.GaussBernoulliRBMParams(B=spec["B"], b=spec["b"], c=spec["c"])
        return models.gauss_bernoulli_rbm_target(params)
    if kind == "gauss-bernoulli-rbm-random":
        rng = stream_rng(seed, STREAM_MODEL)
        params = models.random_gauss_bernoulli_rbm(rng, spec["dim"], spec["hidden"])
        return models.gauss_bernoulli_rbm_target(params)
    raise ConfigError(f"not a continuous model: {kind!r}")


def build_discrete_model(spec: dict, seed: int):
    """Returns (target, ising_params_or_None)."""
    kind = spec["type"]
    if kind == "ising-grid":
        params = models.grid_ising(spec["rows"], spec["cols"], spec["theta"])
        return models.ising_target(params), params
    if kind == "bernoulli-rbm":
        return models.bernoulli_rbm_target(models.BernoulliRBMParams(W=spec["W"], b=spec["b"], c=spec["c"])), None
    if kind == "bernoulli-rbm-random":
        rng = stream_rng(seed, STREAM_MODEL)
        params = models.random_bernoulli_rbm(rng, spec["dims"], spec["hidden"], spec.get("w_scale", 0.05))
        return models.bernoulli_rbm_target(params), None
    if kind == "categorical":
        states = tuple(float(s) for s in spec["states"])
        masses = np.asarray(spec["masses"], dtype=float)
        if masses.size != len(states) or np.any(masses <= 0):
            raise ConfigError("categorical masses must be positive, one per state")
        log_masses = np.log(masses)
        states_arr = np.asarray(states)

        def log_mass(z):
            z2 = np.atleast_2d(z)
            idx = np.searchsorted(states_arr, z2[:, 0])
            out = log_masses[np.clip(idx, 0, len(states) - 1)]
            return out if np.asarray(z).ndim > 1 else out[0]

        return models.DiscreteTarget(dims=1, alphabet=states, log_mass=log_mass), None
    raise ConfigError(f"not a discrete model: {kind!r}")


def _gaussian_init(spec: Optional[dict], dim: int):
    if spec is None:
        return models.gaussian_sampler(np.zeros(dim), 1.0)
    return models.gaussian_sampler(np.asarray(spec["mu"], dtype=float), spec["sigma"])


def build_surrogate(spec: Optional[dict], target: models.ContinuousTarget) -> gfsvgd.Surrogate:
    if spec is None or spec["type"] == "target":
        return gfsvgd.surrogate_from_target(target)
    aux = models.gaussian_target(np.asarray(spec["mu"], dtype=float), spec["sigma"])
    return gfsvgd.Surrogate(log_density=aux.log_density, score=aux.score)


# ---------------------------------------------------------------------------
# Subcommand runners
# ---------------------------------------------------------------------------

def _trace_callback(metrics: MetricsWriter, every: int, total: int):
    def cb(ensemble):
        it = ensemble.iteration
        if it % every == 0 or it == total:
            x = ensemble.positions
            metrics.add(it, "mean", float(x.mean()))
            metrics.add(it, "second_moment", float((x ** 2).mean()))

    return cb


def run_svgd_cmd(cfg, seed, outdir, threads):
    target = build_continuous_model(cfg["model"], seed)
    metrics = MetricsWriter()
    every = cfg.get("metric_every", 10)
    ensemble = svgd.run_svgd(
        target, cfg["n"], cfg["iters"], build_kernel(cfg.get("kernel")), build_schedule(cfg.get("schedule")),
        stream_rng(seed, STREAM_INIT), _gaussian_init(cfg.get("init"), target.dim),
        callback=_trace_callback(metrics, every, cfg["iters"]),
    )
    metrics.write(outdir / "metrics.csv")
    if cfg.get("emit_samples", True):
        _write_samples(outdir / "samples.csv", ensemble.positions)
    x = ensemble.positions
    return {"mean": x.mean(axis=0).tolist(), "second_moment": (x ** 2).mean(axis=0).tolist(),
            "iterations": ensemble.iteration}


def run_gfsvgd_cmd(cfg, seed, outdir, threads):
    target = build_continuous_model(cfg["model"], seed)
    surrogate = build_surrogate(cfg.get("surrogate"), target)
    metrics = MetricsWriter()
    every = cfg.get("metric_every", 10)
    result = gfsvgd.run_gf_svgd(
        target, surrogate, cfg["n"], cfg["iters"], build_kernel(cfg.get("kernel")),
        build_schedule(cfg.get("schedule")), cfg.get("weight_mode", "self-normalized"),
        stream_rng(seed, STREAM_INIT), _gaussian_init(cfg.get("init"), target.dim),
        callback=_trace_callback(metrics, every, cfg["iters"]),
    )
    for i in range(0, cfg["iters"], every):
        metrics.add(i, "ess", float(result.ess_history[i]))
    metrics.write(outdir / "metrics.csv")
    x = result.ensemble.positions
    if cfg.get("emit_samples", True):
        _write_samples(outdir / "samples.csv", x)
    return {"mean": x.mean(axis=0).tolist(), "second_moment": (x ** 2).mean(axis=0).tolist(),
            "final_ess": result.final_weights.ess, "iterations": result.ensemble.iteration}


def run_agf_svgd_cmd(cfg, seed, outdir, threads):
    target = build_continuous_model(cfg["model"], seed)
    p0 = models.gaussian_target(np.asarray(cfg["p0"]["mu"], dtype=float), cfg["p0"]["sigma"])
    betas = np.linspace(0.0, 1.0, cfg["n_temps"] + 1)
    metrics = MetricsWriter()
    every = cfg.get("metric_every", 10)
    smoothing = cfg.get("smoothing_h", "median-heuristic")
    result = gfsvgd.run_agf_svgd(
        target, p0, betas, cfg["n"], build_kernel(cfg.get("kernel")), build_schedule(cfg.get("schedule")),
        stream_rng(seed, STREAM_INIT), _gaussian_init(cfg["p0"], target.dim),
        smoothing_h=None if smoothing == "median-heuristic" else float(smoothing),
        callback=_trace_callback(metrics, every, cfg["n_temps"]),
    )
    for i in range(0, cfg["n_temps"], every):
        metrics.add(i, "ess", float(result.ess_history[i]))
    metrics.write(outdir / "metrics.csv")
    x = result.ensemble.positions
    if cfg.get("emit_samples", True):
        _write_samples(outdir / "samples.csv", x)
    return {"mean": x.mean(axis=0).tolist(), "second_moment": (x ** 2).mean(axis=0).tolist(),
            "temperatures": cfg["n_temps"]}


def run_steinis_cmd(cfg, seed, outdir, threads):
    target = build_continuous_model(cfg["model"], seed)
    mu = np.asarray(cfg["q0"]["mu"], dtype=float)
    result = steinis.run_steinis(
        target, models.gaussian_sampler(mu, cfg["q0"]["sigma"]), models.gaussian_logpdf(mu, cfg["q0"]["sigma"]),
        cfg.get("n_leaders", 100), cfg.get("n_followers", 100), cfg["iters"],
        build_kernel(cfg.get("kernel")), build_schedule(cfg.get("schedule", {"mode": "decay", "eps": 0.3})),
        stream_rng(seed, STREAM_RUN), det_mode=cfg.get("det_mode", "auto"),
    )
    metrics = MetricsWriter()
    for i, eps in enumerate(result.ensemble.eps_history):
        metrics.add(i, "eps", eps)
    metrics.add(cfg["iters"], "ess", result.sample.ess)
    metrics.add(cfg["iters"], "z_hat", result.z_hat)
    metrics.write(outdir / "metrics.csv")
    if cfg.get("emit_samples", True):
        _write_samples(outdir / "samples.csv",
                       np.hstack([result.sample.positions, result.sample.log_weights[:, None]]))
    mean_est = steinis.self_normalized_expectation(result.sample, lambda x: x)
    return {"z_hat": result.z_hat, "ess": result.sample.ess,
            "self_normalized_mean": np.atleast_1d(mean_est).tolist()}


def run_path_logz_cmd(cfg, seed, outdir, threads):
    target = build_continuous_model(cfg["model"], seed)
    mu = np.asarray(cfg["q0"]["mu"], dtype=float)
    logz = steinis.path_integration_logZ(
        target, models.gaussian_sampler(mu, cfg["q0"]["sigma"]), models.gaussian_logpdf(mu, cfg["q0"]["sigma"]),
        cfg["n"], cfg["iters"], build_kernel(cfg.get("kernel", {"bandwidth": 1.0})),
        build_schedule(cfg.get("schedule", {"mode": "constant", "eps": 0.05})),
        cfg.get("m0", 100000), stream_rng(seed, STREAM_RUN),
    )
    metrics = MetricsWriter()
    metrics.add(cfg["iters"], "log_z", logz)
    metrics.write(outdir / "metrics.csv")
    return {"log_z": logz}


def _discrete_surrogate(cfg, ising_params):
    mode = cfg.get("surrogate_mode", "base")
    if mode == "ising":
        if ising_params is None:
            raise ConfigError("surrogate_mode 'ising' needs an ising-grid model")
        return discrete.ising_surrogate(ising_params, cfg.get("lam"))
    return mode


def run_discrete_sample_cmd(cfg, seed, outdir, threads):
    target, params = build_discrete_model(cfg["model"], seed)
    param = discrete.make_parameterization(target)
    surrogate = _discrete_surrogate(cfg, params)
    result = discrete.sample_discrete(
        target, surrogate, cfg["n"], cfg["iters"], build_kernel(cfg.get("kernel")),
        build_schedule(cfg.get("schedule")), stream_rng(seed, STREAM_RUN),
        temperature=cfg.get("temperature", 10.0),
    )
    metrics = MetricsWriter()
    for i, ess in enumerate(result.continuous.ess_history):
        if i % 10 == 0:
            metrics.add(i, "ess", float(ess))
    metrics.write(outdir / "metrics.csv")
    _write_samples(outdir / "samples.csv", discrete.state_index_rows(result.states, param), integer=True)
    site_means = result.states.mean(axis=0)
    return {"site_means": np.atleast_1d(site_means).tolist(), "n_samples": int(result.states.shape[0])}


def run_gof_cmd(cfg, seed, outdir, threads):
    target, params = build_discrete_model(cfg["model"], seed)
    param = discrete.make_parameterization(target)
    if "path" in cfg["data"]:
        idx = _read_state_csv(cfg["data"]["path"])
        z = np.asarray(param.alphabet)[idx]
    else:
        data_target, _ = build_discrete_model(cfg["data"]["model"], seed)
        z = models.sample_discrete_target(stream_rng(seed, STREAM_DATA), cfg["data"]["n"], data_target)
    surrogate = _discrete_surrogate(cfg, params)
    kernel_h = cfg.get("kernel_h", "median-heuristic")
    report = gof.gof_test(
        z, target, alpha=cfg.get("alpha", 0.05), m=cfg.get("m", 1000), seed=seed,
        surrogate_mode=surrogate, kernel_h=None if kernel_h == "median-heuristic" else float(kernel_h),
        param=param,
    )
    metrics = MetricsWriter()
    metrics.add(0, "statistic", report.statistic)
    metrics.add(0, "p_value", report.p_value)
    metrics.add(0, "critical_value", report.critical_value)
    metrics.write(outdir / "metrics.csv")
    (outdir / "report.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return {"report": report.to_dict()}


def run_bbis_cmd(cfg, seed, outdir, threads):
    target = build_continuous_model(cfg["model"], seed)
    surrogate = build_surrogate(cfg.get("surrogate"), target)
    pts = cfg["points"]
    if "path" in pts:
        points = np.loadtxt(pts["path"], delimiter=",", ndmin=2)
    else:
        points = models.gaussian_sampler(np.asarray(pts["mu"], dtype=float), pts["sigma"])(
            stream_rng(seed, STREAM_DATA), pts["n"]
        )
    kernel_h = cfg.get("kernel_h", "median-heuristic")
    h = kernels.median_bandwidth(points) if kernel_h == "median-heuristic" else float(kernel_h)
    weights = ksd.bbis_weights(points, surrogate, target.log_density, h,
                               max_iter=cfg.get("max_iter", 10000), tol=cfg.get("tol", 1e-10))
    gram = ksd.gf_stein_gram(points, surrogate, target.log_density, h)
    objective = float(weights @ gram @ weights)
    uniform = np.full(points.shape[0], 1.0 / points.shape[0])
    metrics = MetricsWriter()
    metrics.add(0, "objective", objective)
    metrics.add(0, "objective_uniform", float(uniform @ gram @ uniform))
    metrics.write(outdir / "metrics.csv")
    _write_samples(outdir / "samples.csv", np.hstack([points, weights[:, None]]))
    return {"objective": objective, "weighted_mean": (weights @ points).tolist(),
            "uniform_mean": points.mean(axis=0).tolist()}


def run_aggregate_cmd(cfg, seed, outdir, threads):
    methods = tuple(cfg.get("methods", ["kl-naive", "kl-control", "kl-weighted"]))
    common = dict(n_machines=cfg["machines"], dim=cfg["dim"], n_grid=cfg["n_grid"],
                  n_trials=cfg["trials"], seed=seed, big_n=cfg.get("big_n", 6e7), methods=methods,
                  known_covariance=cfg.get("known_covariance", False))
    if threads > 1:
        chunks = np.array_split(np.arange(cfg["trials"]), threads)
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(aggregation.gaussian_rate_experiment, trial_indices=chunk.tolist(), **common)
                       for chunk in chunks if chunk.size]
            rows = [row for fut in futures for row in fut.result()]
    else:
        rows = aggregation.gaussian_rate_experiment(**common)
    rows.sort(key=lambda r: (r["trial"], r["n"], r["method"]))
    rates = ["method,d,n,trial,mse"]
    rates += [f"{r['method']},{r['d']},{r['n']},{r['trial']},{_fmt(r['mse'])}" for r in rows]
    (outdir / "rates.csv").write_text("\n".join(rates) + "\n")
    metrics = MetricsWriter()
    for r in rows:
        metrics.add(r["trial"], f"mse_{r['method']}_n{r['n']}", r["mse"])
    metrics.write(outdir / "metrics.csv")
    summary = {}
    for method in methods:
        mean_mse = {}
        for n in cfg["n_grid"]:
            vals = [r["mse"] for r in rows if r["method"] == method and r["n"] == n]
            mean_mse[str(n)] = float(np.mean(vals))
        slope = None
        if len(cfg["n_grid"]) >= 2:
            slope = aggregation.fit_loglog_slope(cfg["n_grid"], [mean_mse[str(n)] for n in cfg["n_grid"]])
        summary[method] = {"mean_mse": mean_mse, "slope": slope}
    return {"methods": summary}


def run_oracle_cmd(cfg, seed, outdir, threads):
    metrics = MetricsWriter()
    if cfg["oracle"] == "brute-force":
        target, _ = build_discrete_model(cfg["model"], seed)
        probs = models.brute_force_distribution(target)
        for i, p in enumerate(probs):
            metrics.add(i, "probability", float(p))
        metrics.write(outdir / "metrics.csv")
        return {"n_states": int(probs.size), "max_probability": float(probs.max())}
    target = build_continuous_model(cfg["model"], seed)
    if target.score is None:
        raise ConfigError("finite-difference oracle needs a model with an analytic score")
    rng = stream_rng(seed, STREAM_DATA)
    n_points = cfg.get("points", 20)
    errs = []
    for i in range(n_points):
        x = rng.standard_normal(target.dim)
        eps = 1e-5 * (1.0 + float(np.linalg.norm(x)))
        fd = models.finite_difference_score(target, x, eps)
        an = target.score(x)
        rel = float(np.linalg.norm(an - fd) / max(np.linalg.norm(fd), 1e-12))
        errs.append(rel)
        metrics.add(i, "score_rel_err", rel)
    metrics.write(outdir / "metrics.csv")
    return {"max_rel_err": float(np.max(errs)), "points": n_points}


RUNNERS = {
    "svgd": run_svgd_cmd,
    "gfsvgd": run_gfsvgd_cmd,
    "agf-svgd": run_agf_svgd_cmd,
    "steinis": run_steinis_cmd,
    "path-logz": run_path_logz_cmd,
    "discrete-sample": run_discrete_sample_cmd,
    "gof": run_gof_cmd,
    "bbis": run_bbis_cmd,
    "aggregate": run_aggregate_cmd,
    "oracle": run_oracle_cmd,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="steinkit", description="Stein-discrepancy particle inference experiments")
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", help="path to the JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="master seed (overrides the config's)")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--threads", type=int, default=1, help="trial-level parallelism")
    parser.add_argument("--print-schema", action="store_true", help="print the subcommand's config schema and exit")
    args = parser.parse_args(argv)

    if args.print_schema:
        json.dump(CONFIG_SCHEMAS[args.subcommand], sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
        return 0

    try:
        if args.config is None:
            raise ConfigError("--config is required")
        try:
            config = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(str(exc)) from exc
        validate_config(args.subcommand, config)
        seed = args.seed if args.seed is not None else config.get("seed", 0)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        results = RUNNERS[args.subcommand](config, seed, outdir, max(1, args.threads))
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except NumericalFailure as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 3

    echo = dict(config)
    echo["seed"] = seed
    summary = {"subcommand": args.subcommand, "seed": seed, "config": echo, "results": results}
    (outdir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
