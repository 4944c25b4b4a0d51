import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from shrinkdiff.core import Dataset, DegenerateDataError, ModelIndicator, ParameterError, PriorSpec
from shrinkdiff.priors import (
    condition_diagnostics,
    default_K,
    default_priors,
    dimension_cutoff,
    identifiability_gap,
    sample_variance,
    solve_qn,
)

from conftest import orthogonal_design


def test_default_K():
    assert default_K(100) == 10
    assert default_K(10**6) == 14


def test_default_priors_p_greater_than_n():
    pr = default_priors(100, 500, 1.0, K=10)
    assert pr.tau0_sq == pytest.approx(1e-3, rel=1e-14)
    # 500^2.1 / 10^4, evaluated independently at 30 digits
    assert pr.tau1_sq == pytest.approx(46.5411391659017610, rel=1e-12)
    assert pr.alpha1 == pr.alpha2 == 0.01


def test_default_priors_square_uses_log_n():
    pr = default_priors(100, 100, 1.0, K=10)
    assert 100**2.1 / 1e4 == pytest.approx(1.58489319246111, rel=1e-12)
    assert pr.tau1_sq == pytest.approx(math.log(100), rel=1e-14)


def test_default_priors_linear_in_sigma_hat():
    a = default_priors(80, 300, 1.0, K=10)
    b = default_priors(80, 300, 3.5, K=10)
    assert b.tau0_sq == pytest.approx(3.5 * a.tau0_sq, rel=1e-14)
    assert b.tau1_sq == pytest.approx(3.5 * a.tau1_sq, rel=1e-14)
    assert b.q == a.q


def test_default_priors_K_above_p():
    with pytest.raises(ParameterError):
        default_priors(100, 5, 1.0, K=10)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 10**5), st.integers(11, 5000), st.floats(1e-3, 1e3))
def test_default_priors_rates_property(n, p, s2):
    pr = default_priors(n, p, s2, K=10)
    assert n * pr.tau0_sq == pytest.approx(s2 / 10, rel=1e-12)
    assert pr.tau1_sq >= s2 * math.log(n) * (1 - 1e-15)


def test_solve_qn_reference_value():
    q = solve_qn(100, 10, 0.1)
    # c solves (10 - c)/sqrt(c) = z_{0.9}; 30-digit root: 6.68620321953059664...
    assert q * 100 == pytest.approx(6.6862032195305966, rel=1e-12)
    assert q == pytest.approx(0.0669, abs=5e-5)


def test_solve_qn_binomial_tail_brute_force():
    q = solve_qn(100, 10, 0.1)
    tail = stats.binom.sf(10, 100, q)
    assert abs(tail - 0.1) <= 0.03


def test_solve_qn_edge_cases():
    q = solve_qn(20, 19, 0.5)
    assert 0 < q < 1
    with pytest.raises(ParameterError):
        solve_qn(10, 10, 0.1)
    with pytest.raises(ParameterError):
        solve_qn(10, 0, 0.1)
    with pytest.raises(ParameterError):
        solve_qn(10, 5, 1.0)


@settings(max_examples=80, deadline=None)
@given(st.integers(2, 200), st.floats(0.01, 0.45), st.data())
def test_solve_qn_root_property(K, alpha, data):
    p = data.draw(st.integers(K + 1, 10 * K + 50))
    q = solve_qn(p, K, alpha)
    c = q * p
    lhs = stats.norm.cdf((K - c) / math.sqrt(c))
    assert lhs == pytest.approx(1 - alpha, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 50), st.floats(0.01, 0.4), st.floats(0.01, 0.4))
def test_solve_qn_monotone_in_alpha(K, a1, a2):
    lo, hi = sorted((a1, a2))
    assert solve_qn(K + 10, K, lo) <= solve_qn(K + 10, K, hi)


def test_solve_qn_vanishes_as_alpha_shrinks():
    qs = [solve_qn(100, 10, a) for a in (0.1, 1e-3, 1e-9, 1e-50, 1e-300)]
    assert all(np.diff(qs) < 0)
    assert qs[-1] < 0.02 * qs[0]


def test_sample_variance():
    assert sample_variance([0.0, 2.0]) == 2.0
    with pytest.raises(DegenerateDataError):
        sample_variance([3.0, 3.0, 3.0])
    y = np.random.default_rng(5).standard_normal(10**5)
    assert abs(sample_variance(y) - 1) < 0.02


def test_dimension_cutoff():
    assert dimension_cutoff(100, 100, 0.02) == math.floor(100 / (2.02 * math.log(100)))
    assert dimension_cutoff(100, 1) == 1
    assert dimension_cutoff(10, 3) == 3


# ---------------------------------------------------------------- diagnostics

def _pr():
    return PriorSpec(1e-3, 5.0, 0.1)


def test_orthogonal_design_eigenvalues(rng):
    n, p = 30, 6
    d = Dataset(orthogonal_design(n, p, rng), rng.standard_normal(n))
    rep = condition_diagnostics(d, _pr(), K=2)
    assert rep.lambda_max == pytest.approx(1.0, rel=1e-10)
    assert rep.lambda_min_nu == pytest.approx(1.0, rel=1e-10)


def test_orthogonal_identifiability_gap_case1(rng):
    n, p = 16, 10
    X = orthogonal_design(n, p, rng)
    beta = np.zeros(p)
    beta[:5] = [0.6, 1.2, 1.8, 2.4, 3.0]
    t = ModelIndicator.from_support(range(5), p)
    gap, count = identifiability_gap(X, t, beta, K=2)
    assert gap == pytest.approx(n * 0.36, rel=1e-9)
    # brute force over every qualifying k (|k| < 10, k not containing t)
    signal = X[:, :5] @ beta[:5]
    best = np.inf
    for i in range(2**p):
        k = ModelIndicator.from_index(i, p)
        if k.size >= 10 or (k >= t):
            continue
        idx = k.support
        if idx.size:
            coef, *_ = np.linalg.lstsq(X[:, idx], signal, rcond=None)
            r = signal - X[:, idx] @ coef
        else:
            r = signal
        best = min(best, float(r @ r))
    assert gap == pytest.approx(best, rel=1e-9)


def test_duplicated_column_keeps_positive_lambda_m(rng):
    X = rng.standard_normal((40, 5))
    X[:, 4] = X[:, 0]
    d = Dataset(X, rng.standard_normal(40))
    full_min = np.linalg.eigvalsh(X.T @ X / 40)[0]
    assert abs(full_min) < 1e-10
    rep = condition_diagnostics(d, _pr(), K=2)
    assert rep.lambda_min_nu is not None and rep.lambda_min_nu > 1e-3


def test_budget_produces_partial_report(rng):
    d = Dataset(rng.standard_normal((200, 40)), rng.standard_normal(200))
    beta = np.zeros(40)
    beta[:3] = 1.0
    rep = condition_diagnostics(d, _pr(), K=3, truth=(ModelIndicator.from_support(range(3), 40), beta, 1.0),
                                budget=1000)
    assert rep.lambda_min_nu is None and rep.delta_n is None
    assert rep.gamma_n == pytest.approx(5 * 3 * 1.05 * math.log(40), rel=1e-12)
    assert rep.flags["condition5"] is None and rep.flags["condition4"] is None
    assert len(rep.notes) == 2


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_lambda_bounds_property(seed):
    rng = np.random.default_rng(seed)
    n, p = 25, 6
    d = Dataset(rng.standard_normal((n, p)), rng.standard_normal(n))
    rep = condition_diagnostics(d, _pr(), K=2)
    assert 0 <= rep.lambda_min_nu <= rep.lambda_max + 1e-12
    assert rep.m_n >= 1


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_gap_monotone_in_K(seed):
    rng = np.random.default_rng(seed)
    n, p = 20, 8
    X = rng.standard_normal((n, p))
    beta = np.zeros(p)
    beta[:2] = rng.uniform(0.5, 2.0, 2)
    t = ModelIndicator.from_support([0, 1], p)
    gaps = [identifiability_gap(X, t, beta, K)[0] for K in (1, 2, 3)]
    assert all(g >= 0 for g in gaps)
    assert gaps[0] >= gaps[1] - 1e-9 >= gaps[2] - 2e-9


def test_flags_present_and_advisory(rng):
    d = Dataset.from_arrays(rng.standard_normal((50, 8)), rng.standard_normal(50))
    pr = default_priors(50, 8, 1.0, K=4)
    rep = condition_diagnostics(d, pr, K=4)
    assert set(rep.flags) == {"condition1", "condition2", "condition4", "condition5"}
    assert rep.n_tau0_sq == pytest.approx(0.1)
    assert rep.as_dict()["p"] == 8
