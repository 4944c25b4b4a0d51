"""Command-line front end: fit, screen, oracle, bench, diagnose.

Every report embeds the effective configuration (priors, K, alpha, seed and
chain settings) so a run can be replayed; wall-clock time is kept under a
separate ``timing`` key in JSON output and left out of CSV output.
"""
from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import Dataset, ModelIndicator, ParameterError
from .gibbs import ChainConfig, parse_sigma_mode, run_chain, write_trace
from .io import dataset_summary, emit_report, load_csv, read_table, response_index
from .oracle import enumerate_posterior
from .priors import (
    DEFAULT_BUDGET,
    DEFAULT_DELTA,
    DEFAULT_KAPPA,
    DEFAULT_NU,
    condition_diagnostics,
    default_K,
    default_priors,
    sample_variance,
)
from .selection import bic_model, marginal_screen, median_model, rank_covariates, refit_ols
from .simbench import METRIC_COLUMNS, CaseSpec, gen_case, run_benchmark

__all__ = ["build_parser", "main", "run_bench", "run_diagnose", "run_fit", "run_oracle", "run_screen"]


def _names(data: Dataset) -> list[str]:
    return list(data.names) if data.names is not None else [f"x{j + 1}" for j in range(data.p)]


def _chain_from_args(args, data: Dataset | None) -> ChainConfig:
    fixed = parse_sigma_mode(args.sigma2)
    if fixed is not None and data is not None:
        # user values are in units of the raw response; the sampler sees Y / y_scale
        fixed = fixed / data.y_scale ** 2
    return ChainConfig(burn_in=args.burnin, iterations=args.iters, seed=args.seed,
                       fixed_sigma_sq=fixed)


def _priors_for(data: Dataset, args):
    if args.K is not None:
        K = args.K
    else:
        # the default bound can exceed a small p; the q recipe needs K < p
        K = min(default_K(data.n), data.p - 1)
        if K < 1:
            raise ParameterError("need at least two covariates to set the default prior")
    if getattr(args, "sigma_hat", None) is not None:
        sigma_hat = args.sigma_hat / data.y_scale ** 2
    else:
        sigma_hat = sample_variance(data.Y)
    return default_priors(data.n, data.p, sigma_hat, K, args.alpha), K, sigma_hat


def _base_config(args, **extra) -> dict:
    cfg = {"command": args.command, "seed": int(args.seed), "version": __version__}
    for key in ("input", "response", "K", "alpha", "sigma2", "threshold", "burnin", "iters"):
        if hasattr(args, key):
            v = getattr(args, key)
            cfg[key] = str(v) if isinstance(v, Path) else v
    cfg.update(extra)
    return cfg


def _size_curve_splits(data: Dataset, args, priors_K_alpha) -> list[dict]:
    """Average test MSPE of OLS refits on the top-m ranked covariates over random splits."""
    K, alpha = priors_K_alpha
    X_raw, Y_raw = data.raw_arrays()
    n = data.n
    n_test = args.test_size
    if not 1 <= n_test <= n - 3:
        raise ParameterError(f"--test-size must lie in [1, {n - 3}]")
    max_m = min(args.sweep_size, n - n_test - 2, data.p)
    sums = np.zeros(max_m + 1)
    for s in range(args.splits):
        rng = np.random.default_rng(np.random.SeedSequence(int(args.seed), spawn_key=(s, 0)))
        perm = rng.permutation(n)
        test, train_idx = perm[:n_test], perm[n_test:]
        train = Dataset.from_arrays(X_raw[train_idx], Y_raw[train_idx], names=data.names)
        pri = default_priors(train.n, train.p, sample_variance(train.Y), K, alpha)
        cseed = int(np.random.SeedSequence(int(args.seed), spawn_key=(s, 1)).generate_state(1, np.uint64)[0])
        chain = replace(_chain_from_args(args, train), seed=cseed)
        summ = run_chain(train, pri, chain)
        order = rank_covariates(summ.marginal_probs, exclude=train.degenerate)
        for m in range(max_m + 1):
            fit = refit_ols(train, ModelIndicator.from_support(order[:m], train.p))
            pred = fit.predict_raw(train, X_raw[test])
            sums[m] += float(np.mean((Y_raw[test] - pred) ** 2))
    return [{"size": m, "mspe": float(sums[m] / args.splits)} for m in range(max_m + 1)]


def _write_curve(rows: list[dict], path, config: dict) -> None:
    emit_report({"command": config.get("command", ""), "config": config, "table": rows,
                 "columns": ["size", "mspe"]}, "csv", path)


def run_fit(args) -> dict:
    t0 = time.perf_counter()
    data = load_csv(args.input, args.response)
    priors, K, sigma_hat = _priors_for(data, args)
    chain = _chain_from_args(args, data)
    if args.trace:
        chain = replace(chain, keep_trace=True)
    summary = run_chain(data, priors, chain)
    med = median_model(summary, args.threshold)
    bic = bic_model(summary, data, args.bic_max_size)
    names = _names(data)
    rows = [{"index": j, "name": names[j], "marginal_prob": float(summary.marginal_probs[j]),
             "median": bool(med.selected.bits[j]), "bic": bool(bic.selected.bits[j])}
            for j in range(data.p)]
    config = _base_config(args, K=K, priors=priors.as_dict(), chain=chain.as_dict(),
                          sigma_hat_sq_standardized=sigma_hat, y_scale=data.y_scale,
                          bic_max_size=args.bic_max_size)
    report = {
        "command": "fit",
        "config": config,
        "data": dataset_summary(data),
        "columns": ["index", "name", "marginal_prob", "median", "bic"],
        "table": rows,
        "selected": {
            "median": [names[j] for j in med.selected.support],
            "bic": [names[j] for j in bic.selected.support],
        },
        "bic_path": bic.bic_path,
        "notes": bic.notes,
        "top_models": [{"support": [names[j] for j in k], "count": c}
                       for k, c in summary.top_models(10)],
    }
    if summary.sigma_trace.size:
        report["sigma_sq_posterior_mean"] = float(summary.sigma_trace.mean()) * data.y_scale ** 2
    if args.trace:
        write_trace(summary, args.trace)
    if args.sweep_size:
        curve = _size_curve_splits(data, args, (K, args.alpha))
        report["size_curve"] = curve
        config["sweep"] = {"max_size": args.sweep_size, "splits": args.splits,
                           "test_size": args.test_size}
        if args.sweep_output:
            _write_curve(curve, args.sweep_output, config)
    report["timing"] = {"seconds": time.perf_counter() - t0}
    return report


def run_screen(args) -> dict:
    t0 = time.perf_counter()
    header, table = read_table(args.input)
    data = load_csv(args.input, args.response)
    names = _names(data)
    forced = []
    for f in args.force or []:
        if f in names:
            forced.append(names.index(f))
        elif f.isdigit():
            forced.append(int(f))
        else:
            raise ParameterError(f"forced column {f!r} not found")
    res = marginal_screen(data, args.keep, forced)
    rows = [{"rank": i + 1, "index": int(j), "name": names[j],
             "abs_correlation": float(abs(res.correlations[j]))} for i, j in enumerate(res.kept)]
    report = {
        "command": "screen",
        "config": _base_config(args, keep=args.keep, force=list(args.force or [])),
        "data": dataset_summary(data),
        "columns": ["rank", "index", "name", "abs_correlation"],
        "table": rows,
        "screen": res.as_dict(names),
    }
    if args.write_subset:
        r = response_index(header, args.response)
        others = [j for j in range(len(header)) if j != r]
        cols = [r] + [others[j] for j in sorted(set(res.kept.tolist()) | set(res.forced.tolist()))]
        keep_names = [header[c] for c in cols]
        with open(args.write_subset, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(keep_names)
            for row in table[:, cols]:
                w.writerow([repr(float(v)) for v in row])
    report["timing"] = {"seconds": time.perf_counter() - t0}
    return report


def run_oracle(args) -> dict:
    t0 = time.perf_counter()
    data = load_csv(args.input, args.response)
    priors, K, sigma_hat = _priors_for(data, args)
    fixed = parse_sigma_mode(args.sigma2)
    sigma_sq = sigma_hat if fixed is None else fixed / data.y_scale ** 2
    exact = enumerate_posterior(data, priors, sigma_sq, args.max_p)
    names = _names(data)
    rows = [{"index": j, "name": names[j], "exact_prob": float(exact.marginals[j])}
            for j in range(data.p)]
    columns = ["index", "name", "exact_prob"]
    extra = {}
    if args.compare:
        chain = ChainConfig(args.burnin, args.iters, args.seed, fixed_sigma_sq=sigma_sq)
        summ = run_chain(data, priors, chain)
        for j, r in enumerate(rows):
            r["gibbs_prob"] = float(summ.marginal_probs[j])
        columns.append("gibbs_prob")
        extra["max_abs_diff"] = float(np.max(np.abs(summ.marginal_probs - exact.marginals)))
        extra["chain"] = chain.as_dict()
    top = np.argsort(-exact.log_prob, kind="stable")[:10]
    report = {
        "command": "oracle",
        "config": _base_config(args, K=K, priors=priors.as_dict(), sigma_sq_standardized=sigma_sq,
                               max_p=args.max_p, compare=bool(args.compare),
                               y_scale=data.y_scale),
        "data": dataset_summary(data),
        "columns": columns,
        "table": rows,
        "map_model": [names[j] for j in exact.map_model.support],
        "top_models": [{"support": [names[j] for j in ModelIndicator.from_index(int(i), data.p).support],
                        "prob": float(np.exp(exact.log_prob[i]))} for i in top],
    }
    report.update(extra)
    report["timing"] = {"seconds": time.perf_counter() - t0}
    return report


def _case_spec(args) -> CaseSpec:
    rho = args.rho
    return CaseSpec.preset(args.case, n=args.n, p=args.p, replications=args.reps, seed=args.seed,
                          rho=rho)


def run_bench(args) -> dict:
    spec = _case_spec(args)
    chain = ChainConfig(burn_in=args.burnin, iterations=args.iters, seed=args.seed,
                        fixed_sigma_sq=parse_sigma_mode(args.sigma2))

    def progress(done, total):
        if args.verbose:
            print(f"replication {done}/{total}", file=sys.stderr)

    res = run_benchmark(spec, chain=chain, K=args.K, alpha=args.alpha, threshold=args.threshold,
                        bic_max_size=args.bic_max_size, n_jobs=args.jobs,
                        prediction=args.prediction, size_sweep=args.sweep_size, progress=progress)
    config = _base_config(args, case=spec.as_dict(), K=res.K, chain=chain.as_dict(),
                          prediction=args.prediction, bic_max_size=args.bic_max_size,
                          sweep_size=args.sweep_size)
    rows = [res.median.as_row(), res.bic.as_row()]
    report = {
        "command": "bench",
        "config": config,
        "columns": list(METRIC_COLUMNS),
        "rules": ["median", "bic"],
        "table": rows,
        "failures": res.failures,
        "replications": [{k: v for k, v in r.items() if k != "traceback"} for r in res.records],
        "csv_notes": ["row order: median, bic"],
        "timing": {"seconds": res.elapsed},
    }
    if res.size_curve is not None:
        curve = [{"size": m, "mspe": v} for m, v in enumerate(res.size_curve)]
        report["size_curve"] = curve
        if args.sweep_output:
            _write_curve(curve, args.sweep_output, config)
    return report


def run_diagnose(args) -> dict:
    t0 = time.perf_counter()
    truth = None
    if args.case is not None:
        spec = _case_spec(args)
        data, tr, _ = gen_case(spec, 0)
        # truth on the standardized scale the diagnostics see
        truth = (tr.t, tr.beta * data.x_scale / data.y_scale, tr.sigma_sq / data.y_scale ** 2)
        source = {"case": spec.as_dict(), "replication": 0}
    elif args.input is not None:
        data = load_csv(args.input, args.response)
        source = {"input": str(args.input)}
    else:
        raise ParameterError("diagnose needs an input CSV or --case")
    priors, K, sigma_hat = _priors_for(data, args)
    rep = condition_diagnostics(data, priors, args.delta, args.nu, args.kappa, K, truth, args.budget)
    d = rep.as_dict()
    rows = [{"quantity": k, "value": "" if v is None else v}
            for k, v in d.items() if k not in ("flags", "notes")]
    rows += [{"quantity": f"flag_{k}", "value": "" if v is None else bool(v)}
             for k, v in d["flags"].items()]
    return {
        "command": "diagnose",
        "config": _base_config(args, K=K, priors=priors.as_dict(), delta=args.delta, nu=args.nu,
                               kappa=args.kappa, budget=args.budget, **source),
        "data": dataset_summary(data),
        "columns": ["quantity", "value"],
        "table": rows,
        "diagnostics": d,
        "timing": {"seconds": time.perf_counter() - t0},
    }


def _add_common(sp, chain: bool = True) -> None:
    sp.add_argument("--seed", type=int, default=0, help="master seed (recorded in the report)")
    sp.add_argument("--K", type=int, default=None, help="prior model-size bound (default max(10, ceil(log n)))")
    sp.add_argument("--alpha", type=float, default=0.1, help="prior mass on models larger than K")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--output", "-o", type=Path, default=None, help="report path (default stdout)")
    if chain:
        sp.add_argument("--burnin", type=int, default=1000)
        sp.add_argument("--iters", type=int, default=5000)
        sp.add_argument("--sigma2", default="ig", help="'ig' to sample sigma^2 or 'fixed:<v>' (raw units)")
        sp.add_argument("--threshold", type=float, default=0.5)


def _add_input(sp, required: bool = True) -> None:
    if required:
        sp.add_argument("input", type=Path, help="CSV with a header row")
    else:
        sp.add_argument("input", type=Path, nargs="?", default=None, help="CSV with a header row")
    sp.add_argument("--response", default=None,
                    help="response column name or 0-based index (default: 'y' or the first column)")
    sp.add_argument("--sigma-hat", type=float, default=None,
                    help="override the residual-variance estimate used by the default priors")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shrinkdiff", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fit", help="run the Gibbs sampler and report both selection rules")
    _add_input(sp)
    _add_common(sp)
    sp.add_argument("--bic-max-size", type=int, default=None)
    sp.add_argument("--trace", type=Path, default=None, help="write a per-iteration CSV trace here")
    sp.add_argument("--sweep-size", type=int, default=0,
                    help="also estimate test MSPE for model sizes 0..N over random splits")
    sp.add_argument("--splits", type=int, default=10)
    sp.add_argument("--test-size", type=int, default=5)
    sp.add_argument("--sweep-output", type=Path, default=None, help="CSV path for the MSPE-vs-size curve")

    sp = sub.add_parser("screen", help="keep the top columns by marginal correlation")
    _add_input(sp)
    _add_common(sp, chain=False)
    sp.add_argument("--keep", type=int, required=True)
    sp.add_argument("--force", action="append", help="column always retained (repeatable)")
    sp.add_argument("--write-subset", type=Path, default=None,
                    help="write a CSV holding the response and retained columns")

    sp = sub.add_parser("oracle", help="exact posterior by enumerating all models (small p)")
    _add_input(sp)
    _add_common(sp)
    sp.add_argument("--max-p", type=int, default=20)
    sp.add_argument("--compare", action="store_true", help="also run a fixed-sigma^2 chain and compare")

    sp = sub.add_parser("bench", help="simulation study for one case")
    _add_common(sp)
    sp.add_argument("--case", type=int, required=True, choices=range(1, 7))
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--p", type=int, default=None)
    sp.add_argument("--reps", type=int, default=None)
    sp.add_argument("--rho", type=float, default=None, help="case 5 only: 0.25 or 0.75")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--bic-max-size", type=int, default=None)
    sp.add_argument("--prediction", choices=("refit", "posterior_mean"), default="refit")
    sp.add_argument("--sweep-size", type=int, default=0)
    sp.add_argument("--sweep-output", type=Path, default=None)
    sp.add_argument("--verbose", action="store_true")

    sp = sub.add_parser("diagnose", help="regularity-condition diagnostics")
    _add_input(sp, required=False)
    _add_common(sp, chain=False)
    sp.add_argument("--case", type=int, default=None, choices=range(1, 7),
                    help="diagnose replication 0 of a simulation case (truth known)")
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--p", type=int, default=None)
    sp.add_argument("--reps", type=int, default=1)
    sp.add_argument("--rho", type=float, default=None)
    sp.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    sp.add_argument("--nu", type=float, default=DEFAULT_NU)
    sp.add_argument("--kappa", type=float, default=DEFAULT_KAPPA)
    sp.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    return ap


_RUNNERS = {"fit": run_fit, "screen": run_screen, "oracle": run_oracle, "bench": run_bench,
            "diagnose": run_diagnose}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = _RUNNERS[args.command](args)
        text = emit_report(report, args.format, args.output)
    except (ValueError, OSError) as exc:
        print(f"shrinkdiff {args.command}: error: {exc}", file=sys.stderr)
        return 2
    if args.output is None:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
