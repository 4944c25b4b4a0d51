"""Data types and the closed-form model-posterior score.

Everything here is a pure function of immutable inputs. The posterior of a
model indicator ``k`` (with the noise variance held fixed) is proportional to

    Q_k * s**|k| * exp(-R_k / (2 sigma^2))

where ``Q_k = |D_k + X'X|^{-1/2} |D_k|^{1/2}``, ``R_k`` is the shrunk residual
sum of squares ``Y'(I - X (D_k + X'X)^{-1} X') Y`` and ``D_k`` is the diagonal
prior precision (``1/tau1_sq`` on included covariates, ``1/tau0_sq`` elsewhere).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

__all__ = [
    "CapabilityError",
    "Dataset",
    "DegenerateDataError",
    "ModelIndicator",
    "NumericalInputError",
    "ParameterError",
    "PosteriorScore",
    "PriorSpec",
    "as_model",
    "log_Qk",
    "log_posterior_score",
    "posterior_ratio",
    "precision_diag",
    "score_components",
    "shrunk_rss",
]

STANDARDIZE_TOL = 1e-10


class NumericalInputError(ValueError):
    """Non-finite input or a failed positive-definite factorization."""


class ParameterError(ValueError):
    """Invalid hyperparameter or configuration value."""


class DegenerateDataError(ValueError):
    """Data that carries no information for the requested quantity."""


class CapabilityError(ValueError):
    """Request beyond a hard computational cap (e.g. enumeration size)."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Response ``Y`` (length n) and design ``X`` (n x p).

    When ``standardized`` is true, columns of ``X`` are centered and scaled to
    unit sample variance and ``Y`` is centered (and, from ``from_arrays``, also
    scaled to unit sample variance); ``x_mean``, ``x_scale``, ``y_mean`` and
    ``y_scale`` hold what was removed so raw-scale quantities can be recovered.
    Zero-variance columns are kept (centered to zero) and flagged in
    ``degenerate``.
    """

    X: np.ndarray
    Y: np.ndarray
    standardized: bool = False
    x_mean: np.ndarray | None = None
    x_scale: np.ndarray | None = None
    y_mean: float = 0.0
    y_scale: float = 1.0
    degenerate: np.ndarray | None = None
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        Y = np.array(self.Y, dtype=float).reshape(-1)
        if X.ndim != 2:
            raise ParameterError(f"X must be 2-D, got shape {X.shape}")
        if X.shape[0] != Y.shape[0]:
            raise ParameterError(f"X has {X.shape[0]} rows but Y has length {Y.shape[0]}")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ParameterError("X must have at least one row and one column")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise NumericalInputError("X and Y must be finite")
        p = X.shape[1]
        degenerate = (np.zeros(p, dtype=bool) if self.degenerate is None
                      else np.asarray(self.degenerate, dtype=bool).copy())
        if degenerate.shape != (p,):
            raise ParameterError("degenerate flags must have one entry per column")
        if self.names is not None and len(self.names) != p:
            raise ParameterError("names must have one entry per column")
        for arr in (X, Y, degenerate):
            arr.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "degenerate", degenerate)
        if self.names is not None:
            object.__setattr__(self, "names", tuple(str(s) for s in self.names))
        if self.standardized:
            _check_standardized(X, Y, degenerate)

    @classmethod
    def from_arrays(cls, X, Y, standardize: bool = True, names: Sequence[str] | None = None,
                    scale_y: bool = True) -> "Dataset":
        """Build a dataset, optionally standardizing ``X`` and ``Y``.

        With ``scale_y`` the response is divided by its sample standard
        deviation as well as centered, so variance-based prior defaults do not
        depend on the units of ``Y``.
        """
        X = np.array(X, dtype=float)
        Y = np.array(Y, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X[:, None]
        if not standardize:
            return cls(X, Y, standardized=False, names=names)
        if X.shape[0] < 2:
            raise DegenerateDataError("standardization needs at least two observations")
        mean = X.mean(axis=0)
        Xc = X - mean
        scale = Xc.std(axis=0, ddof=1)
        degenerate = scale <= 1e-12 * np.maximum(1.0, np.abs(mean))
        scale = np.where(degenerate, 1.0, scale)
        Xs = Xc / scale
        Xs[:, degenerate] = 0.0
        y_mean = float(Y.mean())
        yc = Y - y_mean
        y_scale = float(yc.std(ddof=1)) if scale_y else 1.0
        if not y_scale > 0:
            y_scale = 1.0
        return cls(Xs, yc / y_scale, standardized=True, x_mean=mean, x_scale=scale,
                   y_mean=y_mean, y_scale=y_scale, degenerate=degenerate, names=names)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def transform_X(self, X_new) -> np.ndarray:
        """Apply this dataset's column standardization to new rows."""
        X_new = np.asarray(X_new, dtype=float)
        if not self.standardized:
            return X_new
        out = (X_new - self.x_mean) / self.x_scale
        out[:, self.degenerate] = 0.0
        return out

    def raw_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Undo standardization: (X, Y) on the original scale."""
        if not self.standardized:
            return self.X.copy(), self.Y.copy()
        X = self.X * self.x_scale + self.x_mean
        return X, self.Y * self.y_scale + self.y_mean

    def subset(self, columns: Sequence[int]) -> "Dataset":
        """Dataset restricted to ``columns`` (standardization metadata carried over)."""
        cols = np.asarray(columns, dtype=int)
        return Dataset(
            self.X[:, cols], self.Y, standardized=self.standardized,
            x_mean=None if self.x_mean is None else self.x_mean[cols],
            x_scale=None if self.x_scale is None else self.x_scale[cols],
            y_mean=self.y_mean, y_scale=self.y_scale, degenerate=self.degenerate[cols],
            names=None if self.names is None else tuple(self.names[i] for i in cols),
        )

    # cached Gram quantities; cached_property writes to __dict__ so it works on frozen instances
    @cached_property
    def XtX(self) -> np.ndarray:
        return self.X.T @ self.X

    @cached_property
    def XXt(self) -> np.ndarray:
        return self.X @ self.X.T

    @cached_property
    def XtY(self) -> np.ndarray:
        return self.X.T @ self.Y

    @cached_property
    def YtY(self) -> float:
        return float(self.Y @ self.Y)


def _check_standardized(X, Y, degenerate):
    n = X.shape[0]
    if n < 2:
        raise ParameterError("a standardized dataset needs n >= 2")
    mean = X.mean(axis=0)
    if np.any(np.abs(mean) > STANDARDIZE_TOL):
        raise ParameterError("standardized X has a column with nonzero mean")
    var = X.var(axis=0, ddof=1)
    live = ~degenerate & (var > 0)
    if np.any(np.abs(var[live] - 1.0) > STANDARDIZE_TOL):
        raise ParameterError("standardized X has a column without unit variance")
    if abs(Y.mean()) > STANDARDIZE_TOL * max(1.0, float(np.abs(Y).max(initial=0.0))):
        raise ParameterError("standardized Y is not centered")


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of the spike-and-slab hierarchy.

    ``tau0_sq`` and ``tau1_sq`` are the spike and slab variances (multiplied by
    sigma^2 in the coefficient prior), ``q`` the prior inclusion probability and
    ``alpha1``/``alpha2`` the inverse-gamma shape/scale for sigma^2.
    """

    tau0_sq: float
    tau1_sq: float
    q: float
    alpha1: float = 0.01
    alpha2: float = 0.01

    def __post_init__(self):
        vals = (self.tau0_sq, self.tau1_sq, self.q, self.alpha1, self.alpha2)
        if not all(np.isfinite(v) for v in vals):
            raise ParameterError("prior parameters must be finite")
        if not 0 < self.tau0_sq < self.tau1_sq:
            raise ParameterError(f"need 0 < tau0_sq < tau1_sq, got {self.tau0_sq}, {self.tau1_sq}")
        if not 0 < self.q < 1:
            raise ParameterError(f"q must lie in (0, 1), got {self.q}")
        if self.alpha1 <= 0 or self.alpha2 <= 0:
            raise ParameterError("alpha1 and alpha2 must be positive")

    @property
    def s(self) -> float:
        """Prior inclusion odds q / (1 - q)."""
        return self.q / (1.0 - self.q)

    @property
    def log_s(self) -> float:
        return float(np.log(self.q) - np.log1p(-self.q))

    def as_dict(self) -> dict:
        return {"tau0_sq": self.tau0_sq, "tau1_sq": self.tau1_sq, "q": self.q,
                "s": self.s, "alpha1": self.alpha1, "alpha2": self.alpha2}


class ModelIndicator:
    """Binary inclusion vector over p covariates (a point of the model space).

    ``|`` and ``&`` are the entrywise max/min, ``~`` the complement, and
    ``k >= j`` (or ``k.contains(j)``) tests that k includes every covariate of j.
    """

    __slots__ = ("_bits",)

    def __init__(self, bits: Iterable[int | bool]):
        arr = np.array(list(bits) if not isinstance(bits, np.ndarray) else bits)
        if arr.ndim != 1:
            raise ParameterError("model indicator must be one-dimensional")
        if arr.size and not np.all((arr == 0) | (arr == 1)):
            raise ParameterError("model indicator entries must be 0/1")
        arr = arr.astype(bool)
        arr.setflags(write=False)
        self._bits = arr

    @classmethod
    def from_support(cls, support: Iterable[int], p: int) -> "ModelIndicator":
        bits = np.zeros(p, dtype=bool)
        bits[list(support)] = True
        return cls(bits)

    @classmethod
    def from_index(cls, index: int, p: int) -> "ModelIndicator":
        """Model whose bit j is bit j of ``index`` (the enumeration order)."""
        return cls((index >> np.arange(p)) & 1)

    @classmethod
    def empty(cls, p: int) -> "ModelIndicator":
        return cls(np.zeros(p, dtype=bool))

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def p(self) -> int:
        return self._bits.size

    @property
    def size(self) -> int:
        return int(self._bits.sum())

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self._bits)

    @property
    def index(self) -> int:
        return int(sum(1 << int(j) for j in self.support))

    def _other(self, other) -> np.ndarray:
        other = as_model(other, self.p)
        return other.bits

    def __or__(self, other) -> "ModelIndicator":
        return ModelIndicator(self._bits | self._other(other))

    def __and__(self, other) -> "ModelIndicator":
        return ModelIndicator(self._bits & self._other(other))

    def __invert__(self) -> "ModelIndicator":
        return ModelIndicator(~self._bits)

    def contains(self, other) -> bool:
        o = self._other(other)
        return bool(np.all(self._bits | ~o))

    def __ge__(self, other) -> bool:
        return self.contains(other)

    def __le__(self, other) -> bool:
        return as_model(other, self.p).contains(self)

    def __gt__(self, other) -> bool:
        return self.contains(other) and self != other

    def __lt__(self, other) -> bool:
        return as_model(other, self.p) > self

    def __eq__(self, other) -> bool:
        if not isinstance(other, ModelIndicator):
            return NotImplemented
        return self.p == other.p and bool(np.array_equal(self._bits, other._bits))

    def __hash__(self) -> int:
        return hash((self.p, np.packbits(self._bits).tobytes()))

    def __len__(self) -> int:
        return self.p

    def __repr__(self) -> str:
        return f"ModelIndicator(p={self.p}, support={self.support.tolist()})"


def as_model(k, p: int | None = None) -> ModelIndicator:
    """Coerce a ModelIndicator or 0/1 array-like; checks length against ``p``."""
    m = k if isinstance(k, ModelIndicator) else ModelIndicator(np.asarray(k))
    if p is not None and m.p != p:
        raise ParameterError(f"model has length {m.p}, expected {p}")
    return m


@dataclass(frozen=True)
class PosteriorScore:
    """Unnormalized log posterior of one model and its ingredients."""

    log_Q: float
    shrunk_rss: float
    size: int
    log_s: float
    sigma_sq: float
    log_score: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "log_score", self.recompute())

    def recompute(self) -> float:
        return self.log_Q + self.size * self.log_s - self.shrunk_rss / (2.0 * self.sigma_sq)


def precision_diag(k, priors: PriorSpec) -> np.ndarray:
    """Diagonal of D_k: 1/tau1_sq on included covariates, 1/tau0_sq elsewhere.

    Returned as a vector; ``np.diag`` gives the matrix.
    """
    bits = as_model(k).bits
    return np.where(bits, 1.0 / priors.tau1_sq, 1.0 / priors.tau0_sq)


def _use_dual(n: int, p: int, form: str) -> bool:
    if form == "auto":
        return p > n
    if form not in ("primal", "dual"):
        raise ParameterError(f"unknown form {form!r}; use 'auto', 'primal' or 'dual'")
    return form == "dual"


def score_components(data: Dataset, k, priors: PriorSpec, form: str = "auto") -> tuple[float, float]:
    """Return (log Q_k, shrunk RSS) from one Cholesky factorization.

    primal: A = X'X + D_k (p x p);  log Q = 0.5 log|D_k| - log|A|^{1/2}
            R = Y'Y - |L^{-1} X'Y|^2
    dual:   M = I + X D_k^{-1} X' (n x n);  log Q = -log|M|^{1/2}
            R = |L^{-1} Y|^2   (Woodbury)
    """
    d = precision_diag(as_model(k, data.p), priors)
    try:
        if _use_dual(data.n, data.p, form):
            M = (data.X / d) @ data.X.T
            M[np.diag_indices_from(M)] += 1.0
            L = linalg.cholesky(M, lower=True)
            w = linalg.solve_triangular(L, data.Y, lower=True)
            log_q = -float(np.sum(np.log(np.diag(L))))
            rss = float(w @ w)
        else:
            A = data.XtX + np.diag(d)
            L = linalg.cholesky(A, lower=True)
            w = linalg.solve_triangular(L, data.XtY, lower=True)
            log_q = 0.5 * float(np.sum(np.log(d))) - float(np.sum(np.log(np.diag(L))))
            rss = data.YtY - float(w @ w)
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalInputError(f"factorization failed: {exc}") from exc
    if not (np.isfinite(log_q) and np.isfinite(rss)):
        raise NumericalInputError("non-finite posterior score components")
    return log_q, min(max(rss, 0.0), data.YtY)


def shrunk_rss(data: Dataset, k, priors: PriorSpec) -> float:
    """Y'(I - X (D_k + X'X)^{-1} X') Y, clipped to [0, Y'Y]."""
    return score_components(data, k, priors)[1]


def log_Qk(data: Dataset, k, priors: PriorSpec, form: str = "auto") -> float:
    """log |D_k + X'X|^{-1/2} |D_k|^{1/2}.

    ``form`` selects the p x p ("primal") or n x n ("dual") determinant; "auto"
    picks the smaller system.
    """
    return score_components(data, k, priors, form)[0]


def log_posterior_score(data: Dataset, k, priors: PriorSpec, sigma_sq: float) -> PosteriorScore:
    if not sigma_sq > 0:
        raise ParameterError("sigma_sq must be positive")
    k = as_model(k, data.p)
    log_q, rss = score_components(data, k, priors)
    return PosteriorScore(log_q, rss, k.size, priors.log_s, float(sigma_sq))


def posterior_ratio(data: Dataset, k, t, priors: PriorSpec, sigma_sq: float,
                    log: bool = False) -> float:
    """P(Z=k | Y, sigma^2) / P(Z=t | Y, sigma^2); ``log=True`` returns the log-ratio."""
    k = as_model(k, data.p)
    t = as_model(t, data.p)
    if k == t:
        return 0.0 if log else 1.0
    lr = (log_posterior_score(data, k, priors, sigma_sq).log_score
          - log_posterior_score(data, t, priors, sigma_sq).log_score)
    return lr if log else float(np.exp(lr))
