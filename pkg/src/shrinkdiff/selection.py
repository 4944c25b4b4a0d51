"""Turning marginal inclusion probabilities into a selected model."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .core import Dataset, ModelIndicator, ParameterError, as_model

__all__ = [
    "OLSFit",
    "ScreenResult",
    "SelectionResult",
    "bic_model",
    "default_bic_max_size",
    "marginal_screen",
    "median_model",
    "rank_covariates",
    "refit_ols",
]


@dataclass
class OLSFit:
    """Least-squares fit with intercept on a subset of columns of a Dataset.

    ``coef`` is on the dataset's own (possibly standardized) scale, one entry
    per covariate in ``support``.
    """

    support: np.ndarray
    intercept: float
    coef: np.ndarray
    rank_deficient: bool = False

    def predict(self, X) -> np.ndarray:
        """Predictions for rows already on the dataset's scale (full p columns)."""
        X = np.asarray(X, dtype=float)
        return self.intercept + X[:, self.support] @ self.coef

    def to_raw(self, data: Dataset) -> tuple[float, np.ndarray]:
        """Intercept and coefficients on the original (unstandardized) scale."""
        if not data.standardized:
            return self.intercept, self.coef.copy()
        scale = data.x_scale[self.support]
        mean = data.x_mean[self.support]
        coef = data.y_scale * self.coef / scale
        return float(data.y_mean + data.y_scale * self.intercept - coef @ mean), coef

    def predict_raw(self, data: Dataset, X_raw) -> np.ndarray:
        intercept, coef = self.to_raw(data)
        return intercept + np.asarray(X_raw, dtype=float)[:, self.support] @ coef


@dataclass
class SelectionResult:
    selected: ModelIndicator
    rule: str
    threshold_used: float
    refit: OLSFit | None = None
    bic_path: np.ndarray | None = field(default=None, repr=False)
    notes: list = field(default_factory=list)


def _probs_of(summary) -> np.ndarray:
    probs = getattr(summary, "marginal_probs", summary)
    return np.asarray(probs, dtype=float)


def median_model(summary, threshold: float = 0.5) -> SelectionResult:
    """Keep covariates whose marginal probability strictly exceeds ``threshold``."""
    if not 0 < threshold < 1:
        raise ParameterError("threshold must lie in (0, 1)")
    probs = _probs_of(summary)
    return SelectionResult(ModelIndicator(probs > threshold), "median", float(threshold))


def rank_covariates(probs: np.ndarray, exclude: np.ndarray | None = None) -> np.ndarray:
    """Indices by decreasing probability, ties by index; ``exclude`` goes last."""
    probs = np.asarray(probs, dtype=float)
    key = -probs
    if exclude is not None:
        key = np.where(exclude, np.inf, key)
    return np.argsort(key, kind="stable")


def default_bic_max_size(n: int, p: int) -> int:
    return max(0, min(p, n - 2, n // 2))


def bic_model(summary, data: Dataset, max_size: int | None = None) -> SelectionResult:
    """Choose how many top-ranked covariates to keep by BIC.

    BIC(m) = n log(RSS_m / n) + m log n, with RSS_m from least squares (with
    intercept) on the m highest-probability covariates. Ties go to the smaller
    m. Prefix fits come from a single QR factorization; once a prefix is rank
    deficient it and every longer prefix are skipped.
    """
    probs = _probs_of(summary)
    n, p = data.n, data.p
    if probs.size != p:
        raise ParameterError("probabilities and data disagree on p")
    limit = min(p, n - 2)
    if max_size is None:
        max_size = default_bic_max_size(n, p)
    if max_size > limit:
        raise ParameterError(f"max_size must be <= min(p, n - 2) = {limit}")
    live = int((~data.degenerate).sum())
    max_size = min(max_size, live)
    order = rank_covariates(probs, exclude=data.degenerate)[:max_size]
    design = np.column_stack([np.ones(n), data.X[:, order]])
    Q, R = linalg.qr(design, mode="economic")
    qty = Q.T @ data.Y
    diag = np.abs(np.diag(R))
    tol = max(n, design.shape[1]) * np.finfo(float).eps * diag.max()
    yc = data.Y - data.Y.mean()
    tss = float(yc @ yc)
    bic = np.full(max_size + 1, np.inf)
    notes = []
    rss = float(data.Y @ data.Y) - qty[0] ** 2
    bic[0] = n * np.log(max(tss, np.finfo(float).tiny) / n)
    for m in range(1, max_size + 1):
        if diag[m] <= tol:
            notes.append(f"prefix sizes {m}..{max_size} rank deficient; skipped")
            break
        rss -= qty[m] ** 2
        bic[m] = n * np.log(max(rss, np.finfo(float).tiny) / n) + m * np.log(n)
    best = int(np.argmin(bic))
    chosen = order[:best]
    threshold = float(probs[chosen[-1]]) if best else 1.0
    return SelectionResult(ModelIndicator.from_support(chosen, p), "bic", threshold,
                           bic_path=bic, notes=notes)


@dataclass
class ScreenResult:
    """Top columns by absolute marginal correlation with the response."""

    kept: np.ndarray
    correlations: np.ndarray
    forced: np.ndarray
    total_predictors: int

    def as_dict(self, names=None) -> dict:
        out = {"kept": self.kept.tolist(), "forced": self.forced.tolist(),
               "abs_correlation": [float(abs(self.correlations[j])) for j in self.kept],
               "total_predictors_with_intercept": self.total_predictors}
        if names is not None:
            out["kept_names"] = [names[j] for j in self.kept]
        return out


def marginal_screen(data: Dataset, keep: int, forced=()) -> ScreenResult:
    """Rank columns by |corr(X_j, Y)| (ties by index) and keep the top ``keep``.

    ``forced`` columns (e.g. a sex indicator) are always retained in addition
    and do not count toward ``keep``. ``total_predictors`` counts the retained
    columns plus an intercept.
    """
    p = data.p
    forced = np.asarray(sorted(set(int(j) for j in forced)), dtype=int)
    candidates = np.setdiff1d(np.arange(p), forced)
    if not 1 <= keep <= candidates.size:
        raise ParameterError(f"keep must lie in [1, {candidates.size}]")
    Xc = data.X - data.X.mean(axis=0)
    yc = data.Y - data.Y.mean()
    xs = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    ys = float(np.sqrt(yc @ yc))
    with np.errstate(divide="ignore", invalid="ignore"):
        corr = (Xc.T @ yc) / (xs * ys)
    zero = (xs <= 1e-12 * max(1.0, float(xs.max(initial=0.0)))) | ~np.isfinite(corr)
    corr = np.where(zero, 0.0, corr)
    order = candidates[np.argsort(-np.abs(corr[candidates]), kind="stable")]
    kept = order[:keep]
    return ScreenResult(kept, corr, forced, int(kept.size + forced.size + 1))


def refit_ols(data: Dataset, k) -> OLSFit:
    """Least squares with intercept on the columns selected by ``k``."""
    k = as_model(k, data.p)
    idx = k.support
    if idx.size == 0:
        return OLSFit(idx, float(data.Y.mean()), np.zeros(0))
    design = np.column_stack([np.ones(data.n), data.X[:, idx]])
    sol, _, rank, _ = np.linalg.lstsq(design, data.Y, rcond=None)
    deficient = rank < design.shape[1]
    if deficient:
        warnings.warn(f"refit design has rank {rank} < {design.shape[1]}; using the "
                      "minimum-norm least-squares solution", stacklevel=2)
    return OLSFit(idx, float(sol[0]), sol[1:], bool(deficient))
