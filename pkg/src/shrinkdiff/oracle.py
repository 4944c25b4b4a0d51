"""Ground-truth engines for small problems and orthogonal designs.

* exhaustive enumeration of the model posterior (p <= 20)
* closed-form marginals and the selection threshold for X'X = nI
* the L0-type objective whose minimizer is the posterior mode
* the four-way partition of the model space used to track posterior ratios
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
from scipy.special import expit, logsumexp

from .core import (
    CapabilityError,
    Dataset,
    ModelIndicator,
    ParameterError,
    PriorSpec,
    score_components,
    as_model,
)

__all__ = [
    "ENUMERATION_CAP",
    "ExactPosterior",
    "classwise_ratio_sums",
    "enumerate_posterior",
    "l0_objective",
    "l0_penalty_quotient",
    "ols_rss",
    "orthogonal_marginal",
    "partition_model_space",
    "phi_threshold",
]

ENUMERATION_CAP = 20
_CHUNK_ELEMENTS = 4_000_000


def _index_bits(indices: np.ndarray, p: int) -> np.ndarray:
    return ((indices[:, None] >> np.arange(p)) & 1).astype(bool)


@dataclass(frozen=True, eq=False)
class ExactPosterior:
    """P(Z = k | Y, sigma^2) for every k, indexed by sum_j k_j 2^j."""

    p: int
    log_prob: np.ndarray
    log_score: np.ndarray
    log_Q: np.ndarray
    shrunk_rss: np.ndarray
    sizes: np.ndarray
    marginals: np.ndarray
    sigma_sq: float
    normalized: bool = True

    @property
    def prob(self) -> np.ndarray:
        return np.exp(self.log_prob)

    @property
    def bits(self) -> np.ndarray:
        return _index_bits(np.arange(1 << self.p), self.p)

    def entries(self) -> Iterator[tuple[ModelIndicator, float]]:
        for i, lp in enumerate(self.log_prob):
            yield ModelIndicator.from_index(i, self.p), float(lp)

    def __len__(self) -> int:
        return self.log_prob.size

    def prob_of(self, k) -> float:
        return float(np.exp(self.log_prob[as_model(k, self.p).index]))

    @property
    def map_index(self) -> int:
        return int(np.argmax(self.log_prob))

    @property
    def map_model(self) -> ModelIndicator:
        return ModelIndicator.from_index(self.map_index, self.p)


def _batch_components(data: Dataset, bits: np.ndarray, priors: PriorSpec) -> tuple[np.ndarray, np.ndarray]:
    d = np.where(bits, 1.0 / priors.tau1_sq, 1.0 / priors.tau0_sq)
    if data.p > data.n:
        M = np.einsum("ij,bj,kj->bik", data.X, 1.0 / d, data.X, optimize=True)
        M += np.eye(data.n)
        L = np.linalg.cholesky(M)
        w = np.linalg.solve(L, np.broadcast_to(data.Y, (len(d), data.n))[..., None])[..., 0]
        log_q = -np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
        rss = np.einsum("bi,bi->b", w, w)
    else:
        A = np.broadcast_to(data.XtX, (len(d), data.p, data.p)).copy()
        idx = np.arange(data.p)
        A[:, idx, idx] += d
        L = np.linalg.cholesky(A)
        w = np.linalg.solve(L, np.broadcast_to(data.XtY, (len(d), data.p))[..., None])[..., 0]
        log_q = 0.5 * np.log(d).sum(axis=1) - np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
        rss = data.YtY - np.einsum("bi,bi->b", w, w)
    return log_q, np.clip(rss, 0.0, data.YtY)


def enumerate_posterior(data: Dataset, priors: PriorSpec, sigma_sq: float,
                        max_p: int = ENUMERATION_CAP) -> ExactPosterior:
    """Score all 2^p models and normalize by log-sum-exp.

    Models that include a degenerate (zero-variance) column get probability 0.
    """
    if data.p > min(max_p, ENUMERATION_CAP):
        raise CapabilityError(f"enumeration limited to p <= {min(max_p, ENUMERATION_CAP)}, got p={data.p}")
    if not sigma_sq > 0:
        raise ParameterError("sigma_sq must be positive")
    p = data.p
    total = 1 << p
    m = min(data.n, p)
    chunk = max(1, _CHUNK_ELEMENTS // (m * m + p))
    log_q = np.empty(total)
    rss = np.empty(total)
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        log_q[idx], rss[idx] = _batch_components(data, _index_bits(idx, p), priors)
    bits = _index_bits(np.arange(total), p)
    sizes = bits.sum(axis=1)
    log_score = log_q + sizes * priors.log_s - rss / (2.0 * sigma_sq)
    if data.degenerate.any():
        # zero-variance columns are held out of every model, as in the sampler
        log_score = np.where((bits & data.degenerate).any(axis=1), -np.inf, log_score)
    log_prob = log_score - logsumexp(log_score)
    marg = np.exp(log_prob) @ bits
    return ExactPosterior(p, log_prob, log_score, log_q, rss, sizes, marg, float(sigma_sq))


def orthogonal_marginal(beta_hat_i: float, n: int, sigma_sq: float, priors: PriorSpec) -> float:
    """P(Z_i = 1 | sigma^2, Y) when X'X = nI, from the OLS estimate beta_hat_i.

    q g1 / (q g1 + (1-q) g0) with g_j the N(0, a_j^2) density at beta_hat_i,
    a_j^2 = sigma^2/n + tau_j^2. The log-odds are written as
    0.5 (a0^-2 - a1^-2)(beta_hat^2 - phi_n), so the value is exactly 1/2 at the
    threshold and on the same side of 1/2 as beta_hat^2 is of phi_n.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    a0_sq = sigma_sq / n + priors.tau0_sq
    a1_sq = sigma_sq / n + priors.tau1_sq
    gap = 1.0 / a0_sq - 1.0 / a1_sq
    phi = phi_threshold(n, sigma_sq, priors)
    return float(expit(0.5 * gap * (beta_hat_i * beta_hat_i - phi)))


def phi_threshold(n: int, sigma_sq: float, priors: PriorSpec) -> float:
    """Orthogonal-design cutoff on beta_hat^2 for marginal posterior > 1/2.

    2 (log((1-q) a1) - log(q a0)) / (a0^-2 - a1^-2)
    """
    if not priors.tau1_sq > priors.tau0_sq:
        raise ParameterError("need tau1_sq > tau0_sq")
    a0_sq = sigma_sq / n + priors.tau0_sq
    a1_sq = sigma_sq / n + priors.tau1_sq
    num = (math.log1p(-priors.q) + 0.5 * math.log(a1_sq)) - (math.log(priors.q) + 0.5 * math.log(a0_sq))
    return 2.0 * num / (1.0 / a0_sq - 1.0 / a1_sq)


def l0_objective(data: Dataset, k, t_ref, priors: PriorSpec, sigma_sq: float) -> float:
    """B(k) = R_k + 2 sigma^2 (-(|k| - |t|) log s - log(Q_k / Q_t)).

    Minimizing B over k is the same as maximizing the model posterior.
    """
    k = as_model(k, data.p)
    t_ref = as_model(t_ref, data.p)
    lq_k, r_k = score_components(data, k, priors)
    lq_t, _ = score_components(data, t_ref, priors)
    return r_k + 2.0 * sigma_sq * (-(k.size - t_ref.size) * priors.log_s - (lq_k - lq_t))


def l0_penalty_quotient(data: Dataset, k, t_ref, priors: PriorSpec, sigma_sq: float) -> float:
    """Per-covariate penalty psi with B(k) = R_k + (|k| - |t|) psi; needs |k| != |t|."""
    k = as_model(k, data.p)
    t_ref = as_model(t_ref, data.p)
    diff = k.size - t_ref.size
    if diff == 0:
        raise ParameterError("penalty quotient undefined when |k| == |t|")
    lq_k, _ = score_components(data, k, priors)
    lq_t, _ = score_components(data, t_ref, priors)
    return 2.0 * sigma_sq * (-priors.log_s - (lq_k - lq_t) / diff)


def ols_rss(data: Dataset, k) -> float:
    """Ordinary residual sum of squares of Y on X_k (no intercept)."""
    idx = as_model(k, data.p).support
    if idx.size == 0:
        return data.YtY
    Xk = data.X[:, idx]
    coef, *_ = np.linalg.lstsq(Xk, data.Y, rcond=None)
    r = data.Y - Xk @ coef
    return float(r @ r)


M_TRUE, M_HUGE, M_OVERFIT, M_LARGE, M_UNDERFIT = 0, 1, 2, 3, 4


def partition_model_space(p: int, t, m_n: int, K: int, ranks: Callable) -> np.ndarray:
    """Label every model index with its class.

    0 = the truth t; 1 = rank above m_n; 2 = strict superset of t with
    rank <= m_n; 3 = misses part of t, K|t| < rank <= m_n; 4 = misses part of t,
    rank <= K|t|.
    """
    if p > ENUMERATION_CAP:
        raise CapabilityError(f"partition limited to p <= {ENUMERATION_CAP}")
    t = as_model(t, p)
    t_idx = t.index
    labels = np.empty(1 << p, dtype=np.int8)
    for i in range(1 << p):
        if i == t_idx:
            labels[i] = M_TRUE
            continue
        k = ModelIndicator.from_index(i, p)
        r = ranks(k)
        if r > m_n:
            labels[i] = M_HUGE
        elif (i & t_idx) == t_idx:
            labels[i] = M_OVERFIT
        elif r > K * t.size:
            labels[i] = M_LARGE
        else:
            labels[i] = M_UNDERFIT
    return labels


def classwise_ratio_sums(exact: ExactPosterior, labels: np.ndarray, t) -> dict[int, float]:
    """Sum of PR(k, t) over each class 1..4."""
    t_idx = as_model(t, exact.p).index
    ratios = np.exp(exact.log_prob - exact.log_prob[t_idx])
    return {c: float(ratios[labels == c].sum()) for c in (M_HUGE, M_OVERFIT, M_LARGE, M_UNDERFIT)}
