import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special, stats as sps
from sklearn.metrics import silhouette_score

from simlrkit.stats import (
    GroupedSamples,
    anova_oneway,
    chi2_sf,
    contingency_table,
    dunn_test,
    f_sf,
    kruskal_wallis,
    logistic_fit,
    rankdata,
    reg_inc_beta,
    reg_inc_gamma_lower,
    reg_inc_gamma_upper,
    silhouette,
    std_normal_cdf,
    std_normal_sf,
)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 60), st.floats(0.05, 60), st.floats(0, 1))
def test_inc_beta_matches_scipy(a, b, x):
    assert reg_inc_beta(a, b, x) == pytest.approx(special.betainc(a, b, x), rel=1e-9, abs=1e-14)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 80), st.floats(0, 200))
def test_inc_gamma_matches_scipy(s, x):
    assert reg_inc_gamma_upper(s, x) == pytest.approx(special.gammaincc(s, x), rel=1e-9, abs=1e-300)
    assert reg_inc_gamma_lower(s, x) == pytest.approx(special.gammainc(s, x), rel=1e-9, abs=1e-14)


@pytest.mark.parametrize("x", [0.0, 1e-8, 0.3, 1.0, 5.0, 30.0, 300.0])
def test_upper_gamma_closed_form(x):
    assert reg_inc_gamma_upper(1.0, x) == pytest.approx(math.exp(-x), rel=1e-10, abs=0)


@pytest.mark.parametrize("x", [0.1, 0.5, 0.9])
def test_inc_beta_closed_forms(x):
    assert reg_inc_beta(1.0, 1.0, x) == pytest.approx(x, rel=1e-12)
    assert reg_inc_beta(2.0, 1.0, x) == pytest.approx(x * x, rel=1e-12)


@pytest.mark.parametrize("z", [0.0, 0.5, 1.96, 4.0, 8.0, 20.0])
def test_normal_cdf(z):
    assert std_normal_cdf(z) + std_normal_cdf(-z) == pytest.approx(1.0, rel=1e-14)
    assert std_normal_sf(z) == pytest.approx(0.5 * math.erfc(z / math.sqrt(2)), rel=1e-12)


def test_f_and_chi2_tails():
    assert f_sf(3.2, 2, 17) == pytest.approx(sps.f.sf(3.2, 2, 17), rel=1e-10)
    assert chi2_sf(7.1, 3) == pytest.approx(sps.chi2.sf(7.1, 3), rel=1e-10)
    assert chi2_sf(0.0, 3) == 1.0


def test_silhouette_matches_sklearn():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3))
    lab = rng.integers(1, 4, size=40)
    assert silhouette(X, lab) == pytest.approx(silhouette_score(X, lab), abs=1e-12)


def test_silhouette_singleton_scores_zero_and_errors():
    X = np.array([[0.0], [0.1], [5.0]])
    lab = np.array([1, 1, 2])
    assert silhouette(X, lab) == pytest.approx(silhouette_score(X, lab))
    with pytest.raises(ValueError, match="single cluster"):
        silhouette(X, [1, 1, 1])


def fixed_groups():
    return [
        [4.1, 5.2, 6.3, 5.5, 4.8],
        [6.9, 7.1, 8.4, 6.2],
        [5.0, 5.0, 6.1, 9.2, 7.7, 6.6],
    ]


def test_anova_matches_direct_formula_and_scipy():
    g = fixed_groups()
    allv = np.concatenate(g)
    ssb = sum(len(x) * (np.mean(x) - allv.mean()) ** 2 for x in g)
    ssw = sum(((np.array(x) - np.mean(x)) ** 2).sum() for x in g)
    F = (ssb / 2) / (ssw / (len(allv) - 3))
    res = anova_oneway(g)
    assert res.statistic == pytest.approx(F, rel=1e-12)
    ref = sps.f_oneway(*g)
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-6)


def test_anova_degenerate_flags():
    res = anova_oneway([[1.0, 1.0], [1.0, 1.0]])
    assert res.p_value == 1.0 and res.flags
    res = anova_oneway([[1.0, 1.0], [2.0, 2.0]])
    assert res.p_value == 0.0 and res.statistic == math.inf


def test_rankdata_midranks():
    np.testing.assert_array_equal(rankdata([3, 1, 3, 2]), sps.rankdata([3, 1, 3, 2]))


def test_kruskal_matches_scipy_with_ties():
    g = fixed_groups()
    res = kruskal_wallis(g)
    ref = sps.kruskal(*g)
    assert res.statistic == pytest.approx(ref.statistic, rel=1e-10)
    assert res.p_value == pytest.approx(ref.pvalue, rel=1e-6)


def test_kruskal_all_tied():
    res = kruskal_wallis([[2.0, 2.0], [2.0, 2.0, 2.0]])
    assert res.p_value == 1.0 and "identical" in res.flags[0]


def dunn_oracle(groups):
    allv = np.concatenate(groups)
    N = len(allv)
    r = sps.rankdata(allv)
    idx = np.cumsum([0] + [len(x) for x in groups])
    means = [r[idx[i]:idx[i + 1]].mean() for i in range(len(groups))]
    _, t = np.unique(allv, return_counts=True)
    ties = (t**3 - t).sum()
    out = {}
    pairs = [(i, j) for i in range(len(groups)) for j in range(i + 1, len(groups))]
    for i, j in pairs:
        se = math.sqrt((N * (N + 1) / 12 - ties / (12 * (N - 1))) * (1 / len(groups[i]) + 1 / len(groups[j])))
        z = (means[i] - means[j]) / se
        p = 2 * sps.norm.sf(abs(z))
        out[(i, j)] = (z, min(1, p * len(pairs)))
    return out


def test_dunn_matches_direct_formula():
    g = fixed_groups()
    res = dunn_test(GroupedSamples(g, ["a", "b", "c"]))
    ref = dunn_oracle([np.array(x) for x in g])
    for r, (key, (z, p)) in zip(res, ref.items()):
        assert r.z == pytest.approx(z, rel=1e-10)
        assert r.p_adjusted == pytest.approx(p, rel=1e-6)
    assert [(r.group_a, r.group_b) for r in res] == [("a", "b"), ("a", "c"), ("b", "c")]


def test_dunn_subset_of_pairs_and_errors():
    res = dunn_test(fixed_groups(), pairs=[(0, 2)])
    assert len(res) == 1 and res[0].p_adjusted == res[0].p_value
    with pytest.raises(ValueError):
        dunn_test([[1.0, 1.0], [1.0]])


def newton_oracle(y, X, iters=100):
    beta = np.zeros(X.shape[1])
    for _ in range(iters):
        mu = 1 / (1 + np.exp(-X @ beta))
        grad = X.T @ (y - mu)
        H = X.T @ (X * (mu * (1 - mu))[:, None])
        beta = beta + np.linalg.solve(H, grad)
    mu = 1 / (1 + np.exp(-X @ beta))
    cov = np.linalg.inv(X.T @ (X * (mu * (1 - mu))[:, None]))
    return beta, np.sqrt(np.diag(cov))


def test_logistic_matches_newton_oracle():
    rng = np.random.default_rng(0)
    x = rng.normal(size=60)
    c = rng.normal(size=60)
    y = (rng.random(60) < 1 / (1 + np.exp(-(0.3 + 1.2 * x - 0.5 * c)))).astype(float)
    X = np.column_stack([np.ones(60), x, c])
    fitres = logistic_fit(y, X, ["intercept", "x", "c"])
    beta, se = newton_oracle(y, X)
    np.testing.assert_allclose(fitres.coefficients, beta, atol=1e-6)
    np.testing.assert_allclose(fitres.standard_errors, se, atol=1e-6)
    z = beta / se
    np.testing.assert_allclose(fitres.p_values, 2 * sps.norm.sf(np.abs(z)), atol=1e-6)
    assert fitres.converged
    assert np.all(np.diff(fitres.deviance_trace) <= 1e-9)


def test_logistic_planted_effect_within_3_se():
    rng = np.random.default_rng(1)
    n = 400
    x = rng.integers(0, 3, size=n).astype(float)
    y = (rng.random(n) < 1 / (1 + np.exp(-(-1 + 1.5 * x)))).astype(float)
    res = logistic_fit(y, np.column_stack([np.ones(n), x]))
    assert abs(res.coefficients[1] - 1.5) <= 3 * res.standard_errors[1]


def test_logistic_separation_flagged():
    x = np.array([-2.0, -1, -0.5, 0.5, 1, 2])
    y = (x > 0).astype(float)
    res = logistic_fit(y, np.column_stack([np.ones(6), x]))
    assert not res.converged
    assert "separation" in res.diagnostic or "convergence" in res.diagnostic


def test_logistic_input_errors():
    X = np.column_stack([np.ones(4), [1.0, 2, 3, 4]])
    with pytest.raises(ValueError, match="single class"):
        logistic_fit(np.zeros(4), X)
    with pytest.raises(ValueError, match="rank deficient"):
        logistic_fit(np.array([0, 1, 0, 1.0]), np.column_stack([X, 2 * X[:, 1]]))


TABLE = (
    ",MCI (n=631),AD (n=198),Total (n=829)\n"
    "Subtype 1,45,36,81 (9.77%)\n"
    "Subtype 2,162,72,234 (28.23%)\n"
    "Subtype 3,116,55,171 (20.63%)\n"
    "Subtype 4,107,9,116 (13.99%)\n"
    "Subtype 5,201,26,227 (27.38%)\n"
)


def test_contingency_reproduces_reference_table():
    counts = [(45, 36), (162, 72), (116, 55), (107, 9), (201, 26)]
    labels, cats = [], []
    for k, (mci, ad) in enumerate(counts, start=1):
        labels += [k] * (mci + ad)
        cats += ["MCI"] * mci + ["AD"] * ad
    assert contingency_table(np.array(labels), np.array(cats)) == TABLE
