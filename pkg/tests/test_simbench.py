import numpy as np
import pytest

from shrinkdiff.core import ModelIndicator, ParameterError
from shrinkdiff.gibbs import ChainConfig
from shrinkdiff.selection import refit_ols
from shrinkdiff.simbench import METRIC_COLUMNS, CaseSpec, case_covariance, evaluate, gen_case, run_benchmark

SHORT = ChainConfig(burn_in=200, iterations=1000)


def test_case_spec_validation():
    CaseSpec.preset(1)
    with pytest.raises(ParameterError):
        CaseSpec(1, 100, 100, 0.5, 5, (0.6, 1.2, 1.8, 2.4, 3.0), 10)
    with pytest.raises(ParameterError):
        CaseSpec(3, 100, 500, 0.25, 5, (0.6, 1.2, 1.8, 2.4, 3.0), 10)
    with pytest.raises(ParameterError):
        CaseSpec(5, 100, 500, 0.5, 25, tuple(np.linspace(1, 3, 25)), 10)
    with pytest.raises(ParameterError):
        CaseSpec.preset(7)
    assert CaseSpec.preset(5, rho=0.75).rho == 0.75
    assert CaseSpec.preset(1).replications == 100
    assert CaseSpec.preset(2).replications == 50


def test_case_coefficients():
    assert CaseSpec.preset(1).beta_t == (0.6, 1.2, 1.8, 2.4, 3.0)
    assert CaseSpec.preset(3).beta_t == (0.6,) * 5
    b5 = CaseSpec.preset(5).beta_t
    assert len(b5) == 25 and b5[0] == 1.0 and b5[-1] == 3.0
    assert np.allclose(np.diff(b5), 2 / 24)


def test_case6_coefficients_uniform_0_3():
    spec = CaseSpec.preset(6, replications=30)
    for rep in range(30):
        _, truth, _ = gen_case(spec, rep)
        active = truth.beta[:3]
        assert np.all((active > 0) & (active < 3)) and np.all(truth.beta[3:] == 0)


def test_case4_block_covariance():
    S = case_covariance(CaseSpec.preset(4, p=8))
    assert S[0, 1] == 0.25 and S[0, 6] == 0.5 and S[6, 7] == 0.75 and S[3, 3] == 1.0


def test_case6_wishart_centered_at_identity():
    spec = CaseSpec.preset(6, n=100, p=50)
    mats = [case_covariance(spec, np.random.default_rng(s)) for s in range(200)]
    mean = np.mean(mats, axis=0)
    assert np.max(np.abs(mean - np.eye(50))) < 0.1


def test_case1_pairwise_correlation():
    spec = CaseSpec.preset(1, replications=100, seed=1)
    avgs = []
    for rep in range(100):
        train, _, _ = gen_case(spec, rep)
        C = np.corrcoef(train.X.T)
        avgs.append(C[np.triu_indices(100, 1)].mean())
    assert abs(np.mean(avgs) - 0.25) <= 0.05


def test_gen_case_deterministic_and_shapes():
    spec = CaseSpec.preset(2, n=40, p=60, replications=3, seed=11)
    a = gen_case(spec, 2)
    b = gen_case(spec, 2)
    assert a[0].X.tobytes() == b[0].X.tobytes() and a[2].Y.tobytes() == b[2].Y.tobytes()
    assert a[0].standardized and not a[2].standardized
    assert a[2].n == 40 and a[1].sigma_sq == 1.0
    assert gen_case(spec, 1)[0].Y.tobytes() != a[0].Y.tobytes()


def test_evaluate_examples():
    spec = CaseSpec.preset(1, n=40, p=10, replications=1)
    train, truth, test = gen_case(spec, 0)
    t = truth.t
    m = evaluate(t, truth, refit_ols(train, t), test, train)
    assert (m["exact"], m["superset"], m["fdr"]) == (1.0, 1.0, 0.0)
    empty = ModelIndicator.empty(10)
    m = evaluate(empty, truth, refit_ols(train, empty), test, train)
    assert m["fdr"] == 0.0 and m["superset"] == 0.0 and m["mspe"] > 0
    plus = t | ModelIndicator.from_support([7], 10)
    m = evaluate(plus, truth, refit_ols(train, plus), test, train)
    assert m["fdr"] == pytest.approx(1 / 6) and m["superset"] == 1.0 and m["exact"] == 0.0


def test_run_benchmark_deterministic_and_metrics_valid():
    spec = CaseSpec.preset(1, n=50, p=30, replications=4, seed=5)
    a = run_benchmark(spec, chain=SHORT)
    b = run_benchmark(spec, chain=SHORT)
    assert a.table() == b.table()
    assert a.failures == 0
    for row in a.table():
        assert set(row) == {"rule", *METRIC_COLUMNS}
        for c in ("pp0", "pp1", "exact", "superset", "fdr"):
            assert 0 <= row[c] <= 1
        assert row["mspe"] >= 0
    c = run_benchmark(spec, chain=SHORT, n_jobs=2)
    assert c.table() == a.table()


def test_run_benchmark_records_failures(monkeypatch):
    import shrinkdiff.simbench as sb

    real = sb.run_chain
    calls = {"n": 0}

    def flaky(*a, **kw):
        calls["n"] += 1
        if calls["n"] == 2:
            raise RuntimeError("boom")
        return real(*a, **kw)

    monkeypatch.setattr(sb, "run_chain", flaky)
    res = run_benchmark(CaseSpec.preset(1, n=40, p=20, replications=3), chain=SHORT)
    assert res.failures == 1
    assert "boom" in res.records[1]["error"]
    assert np.isfinite(res.median.exact)


def test_posterior_mean_prediction_and_size_curve():
    spec = CaseSpec.preset(1, n=50, p=30, replications=2, seed=1)
    res = run_benchmark(spec, chain=SHORT, prediction="posterior_mean", size_sweep=8)
    assert np.isfinite(res.median.mspe)
    assert len(res.size_curve) == 9
    # the five true covariates explain most of the variance
    assert res.size_curve[5] < 0.2 * res.size_curve[0]
    with pytest.raises(ParameterError):
        run_benchmark(spec, prediction="lasso")


@pytest.mark.parametrize("case_id", [1, 2, 3, 4, 5, 6])
def test_pp0_below_pp1_every_case(case_id):
    spec = CaseSpec.preset(case_id, replications=2, seed=3)
    res = run_benchmark(spec, chain=SHORT)
    assert res.failures == 0
    assert res.median.pp0 < res.median.pp1


@pytest.mark.slow
def test_case2_large_table_values():
    # published reference at (n, p) = (200, 1000): exact 0.930, FDR 0.000
    res = run_benchmark(CaseSpec.preset(2, n=200, p=1000, replications=50, seed=2024))
    print(f"case 2 (200,1000): exact={res.median.exact:.3f} fdr={res.median.fdr:.4f}")
    assert res.failures == 0
    assert res.median.exact >= 0.80
    assert res.median.fdr <= 0.05
