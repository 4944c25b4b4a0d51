"""Three-block Gibbs sampler over (beta, Z, sigma^2) with conjugate conditionals."""
from __future__ import annotations

import csv
import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import expit

from .core import Dataset, ModelIndicator, NumericalInputError, ParameterError, PriorSpec, as_model
from .priors import sample_variance

__all__ = [
    "ChainConfig",
    "PosteriorSummary",
    "draw_beta",
    "draw_sigma_sq",
    "draw_z",
    "inclusion_probs",
    "parse_sigma_mode",
    "run_chain",
    "run_chains",
    "sigma_sq_conditional",
    "write_trace",
]

MODEL_COUNT_CAP = 1024


@dataclass(frozen=True)
class ChainConfig:
    """Run length, seed and variance handling for one chain.

    ``fixed_sigma_sq`` set to a positive value holds sigma^2 fixed; ``None``
    samples it from its inverse-gamma conditional.
    """

    burn_in: int = 1000
    iterations: int = 5000
    seed: int = 0
    fixed_sigma_sq: float | None = None
    rao_blackwell: bool = True
    thin: int = 1
    keep_trace: bool = False

    def __post_init__(self):
        if self.burn_in < 0:
            raise ParameterError("burn_in must be >= 0")
        if self.iterations < 1:
            raise ParameterError("iterations must be >= 1")
        if self.thin < 1:
            raise ParameterError("thin must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")
        if self.fixed_sigma_sq is not None and not self.fixed_sigma_sq > 0:
            raise ParameterError("fixed sigma^2 must be positive")

    @property
    def sigma_mode(self) -> str:
        return "ig" if self.fixed_sigma_sq is None else f"fixed:{self.fixed_sigma_sq!r}"

    def as_dict(self) -> dict:
        return {"burn_in": self.burn_in, "iterations": self.iterations, "seed": int(self.seed),
                "sigma_mode": self.sigma_mode, "rao_blackwell": self.rao_blackwell,
                "thin": self.thin}


def parse_sigma_mode(text: str) -> float | None:
    """``"ig"`` -> None, ``"fixed:<v>"`` -> v."""
    text = text.strip().lower()
    if text in ("ig", "inverse-gamma", "inverse_gamma"):
        return None
    if text.startswith("fixed:"):
        v = float(text.split(":", 1)[1])
        if not v > 0:
            raise ParameterError("fixed sigma^2 must be positive")
        return v
    raise ParameterError(f"sigma mode must be 'ig' or 'fixed:<value>', got {text!r}")


@dataclass
class PosteriorSummary:
    marginal_probs: np.ndarray
    z_frequency: np.ndarray
    beta_mean: np.ndarray
    sigma_trace: np.ndarray
    model_counts: dict
    n_samples: int
    config: ChainConfig
    z_trace: np.ndarray | None = field(default=None, repr=False)

    @property
    def p(self) -> int:
        return self.marginal_probs.size

    def top_models(self, m: int = 10) -> list[tuple[tuple[int, ...], int]]:
        return sorted(self.model_counts.items(), key=lambda kv: -kv[1])[:m]


class _BetaSampler:
    """Exact draws from N(m, sigma^2 V), V = (X'X + D)^{-1}, m = V X'Y.

    primal (p <= n): Cholesky of X'X + D.
    dual (p > n): auxiliary-variable scheme that only factors the n x n
    matrix I + X D^{-1} X' = I + tau0 XX' + (tau1 - tau0) X_k X_k'.
    """

    def __init__(self, data: Dataset, priors: PriorSpec, method: str = "auto"):
        if method == "auto":
            method = "dual" if data.p > data.n else "primal"
        if method not in ("primal", "dual"):
            raise ParameterError(f"unknown beta-draw method {method!r}")
        self.method = method
        self.X = data.X
        self.Y = data.Y
        self.n, self.p = data.n, data.p
        self.t0, self.t1 = priors.tau0_sq, priors.tau1_sq
        if method == "primal":
            self.XtX = data.XtX
            self.XtY = data.XtY
        else:
            self.base = np.eye(self.n) + self.t0 * data.XXt

    def draw(self, bits: np.ndarray, sigma_sq: float, rng: np.random.Generator) -> np.ndarray:
        d = np.where(bits, 1.0 / self.t1, 1.0 / self.t0)
        sigma = np.sqrt(sigma_sq)
        if self.method == "primal":
            A = self.XtX.copy()
            A[np.diag_indices(self.p)] += d
            L = linalg.cholesky(A, lower=True, check_finite=False)
            mean = linalg.cho_solve((L, True), self.XtY, check_finite=False)
            z = rng.standard_normal(self.p)
            noise = linalg.solve_triangular(L, z, lower=True, trans="T", check_finite=False)
            return mean + sigma * noise
        z1 = rng.standard_normal(self.p)
        eps = rng.standard_normal(self.n)
        inv_sqrt_d = 1.0 / np.sqrt(d)
        u_scaled = z1 * inv_sqrt_d                    # u / sigma
        v = self.X @ u_scaled + eps
        M = self.base.copy()
        Xk = self.X[:, bits]
        if Xk.shape[1]:
            M += (self.t1 - self.t0) * (Xk @ Xk.T)
        L = linalg.cholesky(M, lower=True, check_finite=False)
        w = linalg.cho_solve((L, True), self.Y / sigma - v, check_finite=False)
        return sigma * (u_scaled + (self.X.T @ w) / d)


def draw_beta(data: Dataset, k, sigma_sq: float, priors: PriorSpec,
              rng: np.random.Generator, method: str = "auto") -> np.ndarray:
    """One draw of beta | Z = k, sigma^2, Y."""
    bits = as_model(k, data.p).bits
    try:
        return _BetaSampler(data, priors, method).draw(bits, sigma_sq, rng)
    except linalg.LinAlgError as exc:
        raise NumericalInputError(f"beta conditional factorization failed: {exc}") from exc


def inclusion_probs(beta: np.ndarray, sigma_sq: float, priors: PriorSpec) -> np.ndarray:
    """P(Z_i = 1 | beta_i, sigma^2), evaluated on the log-odds scale."""
    t0, t1 = priors.tau0_sq, priors.tau1_sq
    log_odds = (priors.log_s - 0.5 * np.log(t1 / t0)
                + 0.5 * np.square(beta) / sigma_sq * (1.0 / t0 - 1.0 / t1))
    return expit(log_odds)


def draw_z(beta: np.ndarray, sigma_sq: float, priors: PriorSpec,
           rng: np.random.Generator) -> tuple[ModelIndicator, np.ndarray]:
    """Independent Bernoulli draws of Z given beta; also returns the probabilities."""
    probs = inclusion_probs(np.asarray(beta, dtype=float), sigma_sq, priors)
    return ModelIndicator(rng.random(probs.size) < probs), probs


def sigma_sq_conditional(data: Dataset, beta: np.ndarray, k, priors: PriorSpec) -> tuple[float, float]:
    """Shape and scale of the inverse-gamma conditional of sigma^2."""
    d = np.where(as_model(k, data.p).bits, 1.0 / priors.tau1_sq, 1.0 / priors.tau0_sq)
    resid = data.Y - data.X @ beta
    a = priors.alpha1 + data.n / 2.0 + data.p / 2.0
    b = priors.alpha2 + 0.5 * float(beta @ (d * beta)) + 0.5 * float(resid @ resid)
    return a, b


def draw_sigma_sq(data: Dataset, beta: np.ndarray, k, priors: PriorSpec,
                  rng: np.random.Generator) -> float:
    a, b = sigma_sq_conditional(data, beta, k, priors)
    return b / rng.gamma(a)


def run_chain(data: Dataset, priors: PriorSpec, config: ChainConfig = ChainConfig(),
              sigma_init: float | None = None) -> PosteriorSummary:
    """Run burn-in plus ``iterations`` sweeps of beta -> Z -> sigma^2.

    The chain starts from Z = 0, beta = 0 and sigma^2 = the sample variance of
    Y (or the fixed value). Degenerate (zero-variance) columns are pinned to
    Z = 0. Output is a deterministic function of the inputs and ``config.seed``.
    """
    if not data.standardized:
        warnings.warn("running the sampler on unstandardized data; default priors assume "
                      "standardized covariates", stacklevel=2)
    if not np.isfinite(1.0 / priors.tau0_sq):
        raise NumericalInputError("spike precision 1/tau0_sq overflows")
    rng = np.random.default_rng(int(config.seed))
    n, p = data.n, data.p
    sampler = _BetaSampler(data, priors)
    live = ~data.degenerate
    fixed = config.fixed_sigma_sq
    if fixed is not None:
        sigma_sq = float(fixed)
    elif sigma_init is not None:
        sigma_sq = float(sigma_init)
    else:
        sigma_sq = sample_variance(data.Y)
    bits = np.zeros(p, dtype=bool)
    inv_t0, inv_t1 = 1.0 / priors.tau0_sq, 1.0 / priors.tau1_sq
    a_shape = priors.alpha1 + n / 2.0 + p / 2.0

    n_keep = config.iterations // config.thin
    rb_sum = np.zeros(p)
    z_sum = np.zeros(p)
    beta_sum = np.zeros(p)
    sigma_trace = np.empty(n_keep if fixed is None else 0)
    z_trace = np.empty((n_keep, p), dtype=bool) if config.keep_trace else None
    counts: Counter = Counter()
    kept = 0
    total = config.burn_in + config.iterations
    for it in range(total):
        try:
            beta = sampler.draw(bits, sigma_sq, rng)
        except (linalg.LinAlgError, ValueError) as exc:
            raise NumericalInputError(f"iteration {it}: beta draw failed: {exc}") from exc
        if not np.all(np.isfinite(beta)):
            raise NumericalInputError(f"iteration {it}: non-finite beta draw")
        probs = inclusion_probs(beta, sigma_sq, priors)
        probs[~live] = 0.0
        bits = rng.random(p) < probs
        if fixed is None:
            d = np.where(bits, inv_t1, inv_t0)
            resid = data.Y - data.X @ beta
            b_scale = priors.alpha2 + 0.5 * float(beta @ (d * beta)) + 0.5 * float(resid @ resid)
            sigma_sq = b_scale / rng.gamma(a_shape)
            if not np.isfinite(sigma_sq) or sigma_sq <= 0:
                raise NumericalInputError(f"iteration {it}: invalid sigma^2 draw {sigma_sq}")
        post = it - config.burn_in
        if post >= 0 and (post + 1) % config.thin == 0 and kept < n_keep:
            rb_sum += probs
            z_sum += bits
            beta_sum += beta
            counts[np.packbits(bits).tobytes()] += 1
            if fixed is None:
                sigma_trace[kept] = sigma_sq
            if z_trace is not None:
                z_trace[kept] = bits
            kept += 1

    z_freq = z_sum / kept
    marg = rb_sum / kept if config.rao_blackwell else z_freq.copy()
    model_counts = {}
    for key, c in counts.most_common(MODEL_COUNT_CAP):
        support = np.flatnonzero(np.unpackbits(np.frombuffer(key, dtype=np.uint8), count=p))
        model_counts[tuple(int(j) for j in support)] = c
    return PosteriorSummary(marg, z_freq, beta_sum / kept, sigma_trace, model_counts, kept,
                            config, z_trace)


def _chain_worker(args):
    data, priors, config = args
    return run_chain(data, priors, config)


def run_chains(data: Dataset, priors: PriorSpec, config: ChainConfig, n_chains: int,
               n_jobs: int = 1) -> PosteriorSummary:
    """Independent chains with seeds spawned from ``config.seed``; merged in chain order."""
    from dataclasses import replace

    seqs = [np.random.SeedSequence(int(config.seed), spawn_key=(i,)) for i in range(n_chains)]
    configs = [replace(config, seed=int(s.generate_state(1, np.uint64)[0])) for s in seqs]
    jobs = [(data, priors, c) for c in configs]
    if n_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            parts = list(ex.map(_chain_worker, jobs))
    else:
        parts = [_chain_worker(j) for j in jobs]
    total = sum(s.n_samples for s in parts)
    marg = sum(s.marginal_probs * s.n_samples for s in parts) / total
    zf = sum(s.z_frequency * s.n_samples for s in parts) / total
    bm = sum(s.beta_mean * s.n_samples for s in parts) / total
    counts: Counter = Counter()
    for s in parts:
        counts.update(s.model_counts)
    traces = [s.z_trace for s in parts if s.z_trace is not None]
    return PosteriorSummary(
        marg, zf, bm, np.concatenate([s.sigma_trace for s in parts]),
        dict(counts.most_common(MODEL_COUNT_CAP)), total, config,
        np.concatenate(traces) if traces else None,
    )


def write_trace(summary: PosteriorSummary, path) -> None:
    """CSV dump of (iteration, sigma_sq, z) for kept samples; needs ``keep_trace``."""
    if summary.z_trace is None:
        raise ParameterError("no trace recorded; run with keep_trace=True")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "sigma_sq", "z"])
        for i, z in enumerate(summary.z_trace):
            s2 = summary.sigma_trace[i] if summary.sigma_trace.size else summary.config.fixed_sigma_sq
            w.writerow([i, repr(float(s2)), "".join("1" if b else "0" for b in z)])
