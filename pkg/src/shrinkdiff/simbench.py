"""Simulation cases, replication runner and table-style metrics."""
from __future__ import annotations

import time
import traceback
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from .core import Dataset, ModelIndicator, ParameterError, PriorSpec
from .gibbs import ChainConfig, run_chain
from .priors import default_K, default_priors, sample_variance
from .selection import bic_model, median_model, rank_covariates, refit_ols

__all__ = [
    "BenchResult",
    "CaseSpec",
    "METRIC_COLUMNS",
    "Metrics",
    "Truth",
    "case_covariance",
    "evaluate",
    "gen_case",
    "run_benchmark",
]

METRIC_COLUMNS = ("pp0", "pp1", "exact", "superset", "fdr", "mspe")

_CASE1_BETA = (0.6, 1.2, 1.8, 2.4, 3.0)
_CASE_SIZES = {
    1: ((100, 100), (200, 200)),
    2: ((100, 500), (200, 1000)),
    3: ((100, 500),),
    4: ((100, 500),),
    5: ((100, 500),),
    6: ((100, 50), (200, 50)),
}


@dataclass(frozen=True)
class CaseSpec:
    """One simulation setting.

    ``rho`` is the compound-symmetric correlation, or for case 4 the triple
    (active-active, active-inactive, inactive-inactive). Case 6 draws its
    coefficients per replication, so ``beta_t`` is empty there.
    """

    case_id: int
    n: int
    p: int
    rho: float | tuple[float, float, float]
    t_size: int
    beta_t: tuple[float, ...]
    replications: int
    seed: int = 0

    def __post_init__(self):
        if self.case_id not in _CASE_SIZES:
            raise ParameterError(f"case_id must be 1..6, got {self.case_id}")
        if self.n < 3 or self.p < 1:
            raise ParameterError("need n >= 3 and p >= 1")
        if not 1 <= self.t_size <= self.p:
            raise ParameterError("t_size must lie in [1, p]")
        if self.replications < 1:
            raise ParameterError("replications must be >= 1")
        c = self.case_id
        if c == 4:
            if tuple(self.rho) != (0.25, 0.5, 0.75):
                raise ParameterError("case 4 uses (rho1, rho2, rho3) = (0.25, 0.5, 0.75)")
        elif c == 5:
            if self.rho not in (0.25, 0.75):
                raise ParameterError("case 5 uses rho = 0.25 or 0.75")
        elif c != 6 and self.rho != 0.25:
            raise ParameterError(f"case {c} uses rho = 0.25")
        expected = _case_beta(c)
        if c == 6:
            if self.t_size != 3 or self.beta_t:
                raise ParameterError("case 6 has 3 active covariates with coefficients drawn per replication")
        elif self.beta_t != expected or self.t_size != len(expected):
            raise ParameterError(f"case {c} coefficients must be {expected}")

    @classmethod
    def preset(cls, case_id: int, n: int | None = None, p: int | None = None,
               replications: int | None = None, seed: int = 0, rho=None) -> "CaseSpec":
        """Setting from the simulation study; (n, p) defaults to the first listed size."""
        if case_id not in _CASE_SIZES:
            raise ParameterError(f"case_id must be 1..6, got {case_id}")
        dn, dp = _CASE_SIZES[case_id][0]
        n = dn if n is None else n
        p = dp if p is None else p
        if rho is None:
            rho = {4: (0.25, 0.5, 0.75), 6: 0.0}.get(case_id, 0.25)
        beta = _case_beta(case_id)
        t_size = 3 if case_id == 6 else len(beta)
        if replications is None:
            replications = 100 if p <= n else 50
        return cls(case_id, n, p, rho, t_size, beta, replications, seed)

    @property
    def truth(self) -> ModelIndicator:
        return ModelIndicator.from_support(range(self.t_size), self.p)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["rho"] = list(self.rho) if isinstance(self.rho, tuple) else self.rho
        d["beta_t"] = list(self.beta_t)
        return d


def _case_beta(case_id: int) -> tuple[float, ...]:
    if case_id in (1, 2, 4):
        return _CASE1_BETA
    if case_id == 3:
        return (0.6,) * 5
    if case_id == 5:
        return tuple(float(b) for b in np.linspace(1.0, 3.0, 25))
    return ()


@dataclass(frozen=True)
class Truth:
    t: ModelIndicator
    beta: np.ndarray
    sigma_sq: float = 1.0


def _rng(spec: CaseSpec, rep: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(spec.seed), spawn_key=(rep, stream)))


def case_covariance(spec: CaseSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Covariate covariance for the case (case 6 draws a Wishart matrix from ``rng``)."""
    p, t = spec.p, spec.t_size
    if spec.case_id == 6:
        if rng is None:
            raise ParameterError("case 6 needs an rng to draw its covariance")
        W = stats.wishart.rvs(df=p, scale=np.eye(p), random_state=rng)
        return np.atleast_2d(W) / p
    if spec.case_id == 4:
        r1, r2, r3 = spec.rho
        S = np.full((p, p), r3)
        S[:t, :] = r2
        S[:, :t] = r2
        S[:t, :t] = r1
        np.fill_diagonal(S, 1.0)
        return S
    S = np.full((p, p), float(spec.rho))
    np.fill_diagonal(S, 1.0)
    return S


def _draw_rows(m: int, chol: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal((m, chol.shape[0])) @ chol.T


def gen_case(spec: CaseSpec, replication_index: int):
    """Draw (standardized train Dataset, Truth, raw test Dataset) for one replication.

    Train and test share the covariance, coefficients and n. Noise variance is 1.
    """
    rng = _rng(spec, replication_index, 0)
    S = case_covariance(spec, rng)
    chol = np.linalg.cholesky(S)
    beta = np.zeros(spec.p)
    if spec.case_id == 6:
        beta[: spec.t_size] = rng.uniform(0.0, 3.0, size=spec.t_size)
    else:
        beta[: spec.t_size] = spec.beta_t
    X = _draw_rows(spec.n, chol, rng)
    Y = X @ beta + rng.standard_normal(spec.n)
    Xt = _draw_rows(spec.n, chol, rng)
    Yt = Xt @ beta + rng.standard_normal(spec.n)
    train = Dataset.from_arrays(X, Y, standardize=True)
    test = Dataset(Xt, Yt, standardized=False)
    return train, Truth(spec.truth, beta, 1.0), test


@dataclass
class Metrics:
    pp0: float = float("nan")
    pp1: float = float("nan")
    exact: float = float("nan")
    superset: float = float("nan")
    fdr: float = float("nan")
    mspe: float = float("nan")

    def as_row(self) -> dict:
        return {c: float(getattr(self, c)) for c in METRIC_COLUMNS}


def evaluate(selected, truth: Truth, refit, test: Dataset, train: Dataset | None = None) -> dict:
    """Exact-match, superset, false discovery rate and test MSPE for one selection.

    ``refit`` is an OLSFit on ``train`` (predictions go through its raw-scale
    back-transform) or a callable mapping raw test X to predictions.
    """
    sel = ModelIndicator(np.asarray(getattr(selected, "bits", selected), dtype=bool))
    t = truth.t
    false_pos = int((sel.bits & ~t.bits).sum())
    out = {
        "exact": float(sel == t),
        "superset": float(sel >= t),
        "fdr": false_pos / max(sel.size, 1),
    }
    if callable(refit):
        pred = refit(test.X)
    elif train is not None:
        pred = refit.predict_raw(train, test.X)
    else:
        pred = refit.predict(test.X)
    out["mspe"] = float(np.mean((test.Y - pred) ** 2))
    return out


@dataclass
class BenchResult:
    spec: CaseSpec
    chain: ChainConfig
    K: int
    alpha: float
    threshold: float
    median: Metrics
    bic: Metrics
    records: list
    failures: int
    size_curve: list | None = None
    elapsed: float = 0.0

    def table(self) -> list[dict]:
        return [dict(rule="median", **self.median.as_row()), dict(rule="bic", **self.bic.as_row())]


def _posterior_mean_predictor(train: Dataset, beta_mean: np.ndarray):
    def predict(X_raw):
        return train.y_mean + train.y_scale * (train.transform_X(X_raw) @ beta_mean)
    return predict


def _one_replication(args) -> dict:
    spec, rep, chain, K, alpha, threshold, bic_max, priors_override, prediction, sweep = args
    rec: dict = {"replication": rep}
    try:
        train, truth, test = gen_case(spec, rep)
        sigma_hat = sample_variance(train.Y)
        if priors_override is not None:
            priors = priors_override
        else:
            priors = default_priors(train.n, train.p, sigma_hat, K, alpha)
        cseed = int(np.random.SeedSequence(int(spec.seed), spawn_key=(rep, 1)).generate_state(1, np.uint64)[0])
        summary = run_chain(train, priors, replace(chain, seed=cseed), sigma_init=sigma_hat)
        probs = summary.marginal_probs
        t = truth.t.bits
        rec["pp0"] = float(probs[~t].mean()) if (~t).any() else float("nan")
        rec["pp1"] = float(probs[t].mean())
        for rule, res in (("median", median_model(summary, threshold)),
                          ("bic", bic_model(summary, train, bic_max))):
            if prediction == "posterior_mean":
                fit = _posterior_mean_predictor(train, summary.beta_mean)
            else:
                fit = refit_ols(train, res.selected)
            m = evaluate(res.selected, truth, fit, test, train)
            m["size"] = res.selected.size
            rec[rule] = m
        if sweep:
            order = rank_covariates(probs, exclude=train.degenerate)
            curve = []
            for size in range(min(sweep, train.n - 2, train.p) + 1):
                k = ModelIndicator.from_support(order[:size], train.p)
                fit = refit_ols(train, k)
                curve.append(float(np.mean((test.Y - fit.predict_raw(train, test.X)) ** 2)))
            rec["size_curve"] = curve
    except Exception as exc:  # recorded per replication, never fatal
        rec["error"] = f"{type(exc).__name__}: {exc}"
        rec["traceback"] = traceback.format_exc(limit=3)
    return rec


def _aggregate(records: list, rule: str) -> Metrics:
    ok = [r for r in records if "error" not in r]
    if not ok:
        return Metrics()
    return Metrics(
        pp0=float(np.mean([r["pp0"] for r in ok])),
        pp1=float(np.mean([r["pp1"] for r in ok])),
        exact=float(np.mean([r[rule]["exact"] for r in ok])),
        superset=float(np.mean([r[rule]["superset"] for r in ok])),
        fdr=float(np.mean([r[rule]["fdr"] for r in ok])),
        mspe=float(np.mean([r[rule]["mspe"] for r in ok])),
    )


def run_benchmark(spec: CaseSpec, priors: PriorSpec | None = None,
                  chain: ChainConfig = ChainConfig(), K: int | None = None, alpha: float = 0.1,
                  threshold: float = 0.5, bic_max_size: int | None = None, n_jobs: int = 1,
                  prediction: str = "refit", size_sweep: int = 0, progress=None) -> BenchResult:
    """Generate, fit and score every replication; aggregate in replication order.

    ``priors`` overrides the per-replication defaults. ``chain.seed`` is
    ignored: each replication's chain seed derives from ``spec.seed``.
    """
    if prediction not in ("refit", "posterior_mean"):
        raise ParameterError("prediction must be 'refit' or 'posterior_mean'")
    K = default_K(spec.n) if K is None else int(K)
    jobs = [(spec, r, chain, K, alpha, threshold, bic_max_size, priors, prediction, size_sweep)
            for r in range(spec.replications)]
    start = time.perf_counter()
    if n_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            records = list(ex.map(_one_replication, jobs))
    else:
        records = []
        for j in jobs:
            records.append(_one_replication(j))
            if progress is not None:
                progress(len(records), len(jobs))
    failures = sum("error" in r for r in records)
    curve = None
    if size_sweep:
        curves = [r["size_curve"] for r in records if "size_curve" in r]
        if curves:
            curve = np.mean(np.array(curves), axis=0).tolist()
    return BenchResult(spec, chain, K, alpha, threshold, _aggregate(records, "median"),
                       _aggregate(records, "bic"), records, failures, curve,
                       time.perf_counter() - start)
