"""Default sample-size-dependent hyperparameters and regularity diagnostics."""
from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import optimize, stats

from .core import Dataset, DegenerateDataError, ModelIndicator, ParameterError, PriorSpec, as_model

__all__ = [
    "ConditionReport",
    "condition_diagnostics",
    "default_K",
    "default_priors",
    "dimension_cutoff",
    "identifiability_gap",
    "model_rank_fn",
    "sample_variance",
    "solve_qn",
]

DEFAULT_DELTA = 0.05
DEFAULT_NU = 0.02
DEFAULT_KAPPA = 0.1
DEFAULT_BUDGET = 10**6


def default_K(n: int) -> int:
    """Prior guess at an upper bound on the true model size: max(10, ceil(log n))."""
    return max(10, math.ceil(math.log(n)))


def solve_qn(p: int, K: int, alpha: float = 0.1) -> float:
    """Inclusion probability q = c/p with Phi((K - c)/sqrt(c)) = 1 - alpha.

    Under the normal approximation to the Binomial(p, q) model size, the prior
    mass on models larger than K is then roughly ``alpha``. The root is
    bracketed on (0, K].
    """
    if not (1 <= K < p):
        raise ParameterError(f"need 1 <= K < p, got K={K}, p={p}")
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    z = stats.norm.isf(alpha)

    def f(c):
        return (K - c) / math.sqrt(c) - z

    hi = float(K)
    if f(hi) > 0:
        raise ParameterError(f"no root for c in (0, K]: alpha={alpha} too large for K={K}")
    if f(hi) == 0:
        return hi / p
    lo = hi
    while f(lo) <= 0:
        lo /= 2.0
        if lo < 1e-300:
            raise ParameterError("failed to bracket the inclusion-probability root")
    c = optimize.brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
    return c / p


def sample_variance(Y) -> float:
    """Unbiased sample variance (divisor n - 1)."""
    Y = np.asarray(Y, dtype=float).reshape(-1)
    if Y.size < 2:
        raise DegenerateDataError("sample variance needs at least two values")
    v = float(Y.var(ddof=1))
    if not v > 0:
        raise DegenerateDataError("response is constant")
    return v


def default_priors(n: int, p: int, sigma_hat_sq: float, K: int | None = None,
                   alpha: float = 0.1, alpha1: float = 0.01, alpha2: float = 0.01) -> PriorSpec:
    """Shrinking spike / diffusing slab defaults.

    tau0_sq = sigma_hat_sq / (10 n)
    tau1_sq = sigma_hat_sq * max(p^2.1 / (100 n), log n)
    q       = solve_qn(p, K, alpha)
    """
    if n < 2 or p < 1:
        raise ParameterError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
    if not sigma_hat_sq > 0:
        raise ParameterError("sigma_hat_sq must be positive")
    if K is None:
        K = default_K(n)
    if K > p:
        raise ParameterError(f"K={K} exceeds the number of covariates p={p}")
    tau0_sq = sigma_hat_sq / (10.0 * n)
    tau1_sq = sigma_hat_sq * max(p**2.1 / (100.0 * n), math.log(n))
    return PriorSpec(tau0_sq, tau1_sq, solve_qn(p, K, alpha), alpha1, alpha2)


def dimension_cutoff(n: int, p: int, nu: float = DEFAULT_NU) -> int:
    """m_n(nu) = p wedge n / ((2 + nu) log p), floored and at least 1."""
    if p < 2:
        return 1
    return max(1, min(p, int(math.floor(n / ((2.0 + nu) * math.log(p))))))


@dataclass
class ConditionReport:
    """Raw quantities behind the regularity conditions plus advisory flags.

    Fields that were too expensive under the enumeration budget (or need a
    truth that was not supplied) are ``None``.
    """

    n: int
    p: int
    delta: float
    nu: float
    kappa: float
    K: int
    lambda_max: float
    m_n: int
    log_p_over_n: float
    n_tau0_sq: float
    n_tau1_sq: float
    q_times_p: float
    lambda_min_nu: float | None = None
    delta_n: float | None = None
    gamma_n: float | None = None
    b0: float | None = None
    submatrices_enumerated: int = 0
    flags: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def _n_subsets(p: int, max_size: int) -> int:
    return sum(math.comb(p, j) for j in range(1, max_size + 1))


def _min_nonzero_eig(G: np.ndarray, tol: float) -> float:
    ev = np.linalg.eigvalsh(G)
    nz = ev[ev > tol]
    return float(nz.min()) if nz.size else math.inf


def _residual_sq(X: np.ndarray, cols, target: np.ndarray) -> float:
    if len(cols) == 0:
        return float(target @ target)
    Xk = X[:, list(cols)]
    coef, *_ = np.linalg.lstsq(Xk, target, rcond=None)
    r = target - Xk @ coef
    return float(r @ r)


def identifiability_gap(X: np.ndarray, t, beta_t_full: np.ndarray, K: int,
                        budget: int = DEFAULT_BUDGET) -> tuple[float | None, int]:
    """Delta_n(K): min over {k : |k| < K|t|, k not containing t} of |(I - P_k) X_t b_t|^2.

    Adding columns never increases a projection residual, so the infimum is
    attained by maximal candidates: sets of size min(K|t| - 1, p - 1) that omit
    at least one active covariate. Only those are enumerated. Returns
    (value, count) with value None when the count exceeds ``budget``.
    """
    t = as_model(t, X.shape[1])
    p = X.shape[1]
    active = t.support
    if active.size == 0:
        return None, 0
    signal = X[:, active] @ np.asarray(beta_t_full)[active]
    size = min(K * active.size - 1, p - 1)
    best = math.inf
    count = 0
    seen = set()
    # any maximal candidate misses some active i; enumerate size-`size` subsets of the rest
    total = sum(math.comb(p - 1, size) for _ in active)
    if total > budget:
        return None, total
    for i in active:
        pool = [j for j in range(p) if j != i]
        for cols in itertools.combinations(pool, size):
            if cols in seen:
                continue
            seen.add(cols)
            count += 1
            best = min(best, _residual_sq(X, cols, signal))
    return best, count


def condition_diagnostics(data: Dataset, priors: PriorSpec, delta: float = DEFAULT_DELTA,
                          nu: float = DEFAULT_NU, kappa: float = DEFAULT_KAPPA,
                          K: int | None = None, truth: tuple | None = None,
                          budget: int = DEFAULT_BUDGET) -> ConditionReport:
    """Evaluate the regularity conditions at finite n.

    ``truth`` is an optional ``(t, beta, sigma_sq)`` triple with ``beta`` of
    length p. Rate relations are read as plain inequalities with constant 1:
    ``a = o(b)`` as ``a < b``, ``a >~ b`` and ``a ~ b`` as ``a >= b``.
    """
    if min(delta, nu, kappa) <= 0:
        raise ParameterError("delta, nu and kappa must be positive")
    n, p = data.n, data.p
    K = default_K(n) if K is None else int(K)
    G = data.XtX / n
    lam_max = float(np.linalg.eigvalsh(G)[-1])
    m_n = dimension_cutoff(n, p, nu)
    tol = 1e-10 * max(lam_max, np.finfo(float).tiny)
    rep = ConditionReport(
        n=n, p=p, delta=delta, nu=nu, kappa=kappa, K=K, lambda_max=lam_max, m_n=m_n,
        log_p_over_n=math.log(p) / n if p > 1 else 0.0,
        n_tau0_sq=n * priors.tau0_sq, n_tau1_sq=n * priors.tau1_sq, q_times_p=priors.q * p,
    )

    n_sub = _n_subsets(p, m_n)
    if n_sub <= budget:
        lam_min = math.inf
        for size in range(1, m_n + 1):
            for cols in itertools.combinations(range(p), size):
                idx = np.array(cols)
                lam_min = min(lam_min, _min_nonzero_eig(G[np.ix_(idx, idx)], tol))
        rep.lambda_min_nu = 0.0 if math.isinf(lam_min) else lam_min
        rep.submatrices_enumerated = n_sub
    else:
        rep.notes.append(f"lambda_min_nu skipped: {n_sub} submatrices exceed budget {budget}")

    if truth is not None:
        t, beta, sigma_sq = truth
        t = as_model(t, p)
        beta = np.asarray(beta, dtype=float)
        rep.gamma_n = 5.0 * sigma_sq * t.size * (1.0 + delta) * math.log(max(math.sqrt(n), p))
        inactive = ~t.bits
        rep.b0 = float(np.linalg.norm(data.X[:, inactive] @ beta[inactive]))
        gap, cnt = identifiability_gap(data.X, t, beta, K, budget)
        rep.delta_n = gap
        rep.submatrices_enumerated += cnt
        if gap is None:
            rep.notes.append(f"delta_n skipped: {cnt} candidate models exceed budget {budget}")

    f = rep.flags
    f["condition1"] = rep.log_p_over_n < 1.0
    f["condition2"] = bool(
        rep.n_tau0_sq < 1.0
        and rep.n_tau1_sq >= max(n, p ** (2 + 3 * delta))
        and rep.q_times_p >= 1.0
    )
    if rep.delta_n is not None:
        f["condition4"] = bool(K > 1 + 8 / delta and rep.delta_n > rep.gamma_n)
    else:
        f["condition4"] = None
    upper = min(1.0 / rep.n_tau0_sq, rep.n_tau1_sq)
    eig_ok = lam_max < upper and nu < delta and kappa < (K - 1) * delta / 2
    if rep.lambda_min_nu is not None:
        lower = max(max(n, p ** (2 + 2 * delta)) / rep.n_tau1_sq, p ** (-kappa))
        f["condition5"] = bool(eig_ok and rep.lambda_min_nu >= lower)
    else:
        f["condition5"] = None
    return rep


def model_rank_fn(X: np.ndarray, rel_tol: float = 1e-10):
    """Return k -> rank(X_k), using eigenvalues of X_k'X_k/n above rel_tol * lambda_max."""
    n = X.shape[0]
    G = X.T @ X / n
    lam_max = float(np.linalg.eigvalsh(G)[-1]) if G.size else 0.0
    tol = rel_tol * max(lam_max, np.finfo(float).tiny)

    def rank(k) -> int:
        idx = as_model(k, X.shape[1]).support
        if idx.size == 0:
            return 0
        return int(np.sum(np.linalg.eigvalsh(G[np.ix_(idx, idx)]) > tol))

    return rank

