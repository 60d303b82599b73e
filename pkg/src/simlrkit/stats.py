"""Cluster validation and group-comparison statistics.

P-values come from the special functions defined here (continued fractions
evaluated with the modified Lentz method, series where those converge
faster), so results hold their relative accuracy far into the tails.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .cluster import ClusterAssignment
from .kernels import pairwise_sq_dist

_EPS = 1e-15
_TINY = 1e-300
_MAX_ITER = 10_000


# -- special functions -----------------------------------------------------------

def _lentz(coef, first_b: float) -> float:
    """Evaluate b0 + a1/(b1 + a2/(b2 + ...)) with coef(m) -> (a_m, b_m)."""
    f = first_b if first_b != 0 else _TINY
    C, D = f, 0.0
    for m in range(1, _MAX_ITER):
        a, b = coef(m)
        D = b + a * D
        D = _TINY if D == 0 else D
        C = b + a / C
        C = _TINY if C == 0 else C
        D = 1.0 / D
        delta = C * D
        f *= delta
        if abs(delta - 1.0) < _EPS:
            return f
    raise ArithmeticError("continued fraction failed to converge")


def _beta_cf(a: float, b: float, x: float) -> float:
    # I_x(a,b) = x^a (1-x)^b / (a B(a,b)) * 1 / (1 + d1/(1 + d2/(1 + ...)))
    def coef(m):
        k = m // 2
        if m % 2:
            d = -(a + k) * (a + b + k) * x / ((a + 2 * k) * (a + 2 * k + 1))
        else:
            d = k * (b - k) * x / ((a + 2 * k - 1) * (a + 2 * k))
        return d, 1.0

    return 1.0 / _lentz(coef, 1.0)


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b)
    if x < (a + 1) / (a + b + 2):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def reg_inc_beta_upper(a: float, b: float, x: float) -> float:
    """1 - I_x(a, b), computed without cancellation."""
    if x == 0.0 or x == 1.0:
        return 1.0 - x
    return reg_inc_beta(b, a, 1.0 - x)


def reg_inc_gamma_lower(s: float, x: float) -> float:
    """Regularized lower incomplete gamma P(s, x)."""
    return 1.0 - reg_inc_gamma_upper(s, x) if x >= s + 1 else _gamma_series(s, x)


def _gamma_series(s: float, x: float) -> float:
    if x == 0:
        return 0.0
    term = total = 1.0 / s
    ap = s
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(-x + s * math.log(x) - math.lgamma(s))
    raise ArithmeticError("gamma series failed to converge")


def reg_inc_gamma_upper(s: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(s, x)."""
    if s <= 0:
        raise ValueError("s must be positive")
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x == 0:
        return 1.0
    if x < s + 1:
        return 1.0 - _gamma_series(s, x)

    # Legendre continued fraction: Q = e^-x x^s / Gamma(s) / (x+1-s - 1(1-s)/(x+3-s - ...))
    def coef(m):
        return -m * (m - s), x + 2 * m + 1 - s

    cf = _lentz(coef, x + 1.0 - s)
    return math.exp(-x + s * math.log(x) - math.lgamma(s)) / cf


def std_normal_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def std_normal_sf(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def chi2_sf(x: float, df: float) -> float:
    return 1.0 if x <= 0 else reg_inc_gamma_upper(df / 2.0, x / 2.0)


def f_sf(F: float, d1: float, d2: float) -> float:
    """Upper tail of the F distribution."""
    if F <= 0:
        return 1.0
    return reg_inc_beta(d2 / 2.0, d1 / 2.0, d2 / (d2 + d1 * F))


# -- result types ------------------------------------------------------------------

@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    df: tuple[float, ...] = ()
    method: str = ""
    flags: tuple[str, ...] = ()

    __test__ = False  # keep pytest from collecting this class


@dataclass(frozen=True)
class PairwiseResult:
    group_a: str
    group_b: str
    z: float
    p_value: float
    p_adjusted: float


@dataclass(frozen=True)
class LogisticFit:
    names: tuple[str, ...]
    coefficients: np.ndarray
    standard_errors: np.ndarray
    wald_z: np.ndarray
    p_values: np.ndarray
    converged: bool
    iterations: int
    deviance_trace: list[float] = field(default_factory=list)
    diagnostic: str = ""


class GroupedSamples:
    """Named groups of real-valued samples."""

    def __init__(self, groups: Sequence[Sequence[float]], names: Sequence[str] | None = None):
        self.groups = [np.asarray(g, dtype=float).ravel() for g in groups]
        self.names = [str(n) for n in names] if names is not None else [str(i + 1) for i in range(len(self.groups))]
        if len(self.names) != len(self.groups):
            raise ValueError("names and groups differ in length")
        for name, g in zip(self.names, self.groups):
            if g.size == 0:
                raise ValueError(f"group {name!r} is empty")
            if not np.isfinite(g).all():
                raise ValueError(f"group {name!r} has non-finite values")

    @classmethod
    def from_labels(cls, values, labels) -> "GroupedSamples":
        values = np.asarray(values, dtype=float)
        labels = np.asarray(labels)
        keys = list(dict.fromkeys(labels.tolist()))
        keys.sort(key=lambda k: (str(type(k)), k))
        return cls([values[labels == k] for k in keys], [str(k) for k in keys])

    def __len__(self):
        return len(self.groups)


# -- silhouette ----------------------------------------------------------------------

def silhouette(points, labels) -> float:
    """Mean silhouette width with Euclidean distances; singletons score 0."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    lab = np.asarray(labels.labels if isinstance(labels, ClusterAssignment) else labels)
    n = X.shape[0]
    if n < 2:
        raise ValueError("silhouette needs at least two points")
    if lab.size != n:
        raise ValueError("labels and points differ in length")
    clusters = np.unique(lab)
    if clusters.size < 2:
        raise ValueError("silhouette is not defined for a single cluster")
    D = np.sqrt(pairwise_sq_dist(X))
    sums = np.stack([D[:, lab == c].sum(axis=1) for c in clusters], axis=1)
    sizes = np.array([(lab == c).sum() for c in clusters])
    own = np.searchsorted(clusters, lab)
    own_size = sizes[own]
    a = np.where(own_size > 1, sums[np.arange(n), own] / np.maximum(own_size - 1, 1), 0.0)
    mean_other = sums / sizes[None, :]
    mean_other[np.arange(n), own] = np.inf
    b = mean_other.min(axis=1)
    denom = np.maximum(a, b)
    s = np.where((own_size > 1) & (denom > 0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(s.mean())


# -- omnibus tests ---------------------------------------------------------------------

def _as_groups(g) -> GroupedSamples:
    return g if isinstance(g, GroupedSamples) else GroupedSamples(g)


def anova_oneway(g) -> TestResult:
    g = _as_groups(g)
    k = len(g)
    if k < 2:
        raise ValueError("need at least two groups")
    N = sum(x.size for x in g.groups)
    if N <= k:
        raise ValueError("need more observations than groups")
    grand = np.concatenate(g.groups).mean()
    ss_between = sum(x.size * (x.mean() - grand) ** 2 for x in g.groups)
    ss_within = sum(((x - x.mean()) ** 2).sum() for x in g.groups)
    df1, df2 = k - 1, N - k
    ms_b, ms_w = ss_between / df1, ss_within / df2
    scale = max(abs(grand), max(np.abs(x).max() for x in g.groups), 1.0)
    if ms_w <= (1e-14 * scale) ** 2:
        if ms_b <= (1e-14 * scale) ** 2:
            return TestResult(0.0, 1.0, (df1, df2), "anova", ("all values identical",))
        return TestResult(math.inf, 0.0, (df1, df2), "anova", ("zero within-group variance",))
    F = ms_b / ms_w
    return TestResult(float(F), f_sf(F, df1, df2), (df1, df2), "anova")


def rankdata(x) -> np.ndarray:
    """Midranks (1-based), ties share the average of their positions."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    ranks = np.empty(x.size)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _tie_sum(values: np.ndarray) -> float:
    _, counts = np.unique(values, return_counts=True)
    counts = counts.astype(float)
    return float((counts**3 - counts).sum())


def kruskal_wallis(g) -> TestResult:
    g = _as_groups(g)
    k = len(g)
    if k < 2:
        raise ValueError("need at least two groups")
    allv = np.concatenate(g.groups)
    N = allv.size
    if N < 3:
        raise ValueError("need at least three observations")
    ranks = rankdata(allv)
    bounds = np.cumsum([0] + [x.size for x in g.groups])
    h = sum(
        (bounds[i + 1] - bounds[i]) * ranks[bounds[i] : bounds[i + 1]].mean() ** 2 for i in range(k)
    )
    H = 12.0 / (N * (N + 1)) * h - 3.0 * (N + 1)
    correction = 1.0 - _tie_sum(allv) / (N**3 - N)
    if correction <= 0:
        return TestResult(0.0, 1.0, (k - 1,), "kruskal-wallis", ("all values identical",))
    H = max(H / correction, 0.0)
    return TestResult(float(H), chi2_sf(H, k - 1), (k - 1,), "kruskal-wallis")


def dunn_test(g, correction: str = "bonferroni", pairs: Sequence[tuple[int, int]] | None = None) -> list[PairwiseResult]:
    """Dunn's rank-sum pairwise comparisons with tie-corrected variance.

    ``pairs`` restricts the comparisons (indices into the groups); ranks are
    always pooled over every group, and Bonferroni multiplies by the number
    of comparisons actually made.
    """
    g = _as_groups(g)
    if len(g) < 2:
        raise ValueError("need at least two groups")
    if correction not in ("bonferroni", "none"):
        raise ValueError(f"unknown correction {correction!r}")
    allv = np.concatenate(g.groups)
    N = allv.size
    ranks = rankdata(allv)
    bounds = np.cumsum([0] + [x.size for x in g.groups])
    mean_rank = [ranks[bounds[i] : bounds[i + 1]].mean() for i in range(len(g))]
    sizes = [x.size for x in g.groups]
    var_base = N * (N + 1) / 12.0 - _tie_sum(allv) / (12.0 * (N - 1))
    if var_base <= 0:
        raise ValueError("all values tied; Dunn's variance is zero")
    pairs = list(pairs) if pairs is not None else list(combinations(range(len(g)), 2))
    out = []
    for i, j in pairs:
        se = math.sqrt(var_base * (1.0 / sizes[i] + 1.0 / sizes[j]))
        z = (mean_rank[i] - mean_rank[j]) / se
        p = min(1.0, 2.0 * std_normal_sf(abs(z)))
        p_adj = min(1.0, p * len(pairs)) if correction == "bonferroni" else p
        out.append(PairwiseResult(g.names[i], g.names[j], float(z), p, p_adj))
    return out


# -- logistic regression -----------------------------------------------------------------

def _deviance(y, eta):
    # -2 log-likelihood with log(1 + e^eta) evaluated stably
    return float(2.0 * np.sum(np.logaddexp(0.0, eta) - y * eta))


def logistic_fit(
    y,
    X,
    names: Sequence[str] | None = None,
    tol: float = 1e-8,
    max_iter: int = 25,
    separation_bound: float = 15.0,
) -> LogisticFit:
    """Maximum-likelihood logistic regression by IRLS with step halving.

    ``X`` must already contain the intercept column.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, q = X.shape
    if y.size != n:
        raise ValueError("y and X differ in length")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("y must be binary 0/1")
    if y.min() == y.max():
        raise ValueError("y contains a single class")
    if q > n:
        raise ValueError("more predictors than observations")
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(q))
    # rank check on a column-scaled copy via pivoted QR-equivalent SVD
    col_scale = np.sqrt((X**2).sum(axis=0))
    if (col_scale == 0).any():
        raise ValueError(f"all-zero predictor column: {names[int(np.argmin(col_scale))]}")
    sv = np.linalg.svd(X / col_scale, compute_uv=False)
    if sv[-1] <= sv[0] * max(n, q) * np.finfo(float).eps * 1e3:
        raise ValueError("design matrix is rank deficient")

    beta = np.zeros(q)
    eta = X @ beta
    dev = _deviance(y, eta)
    trace = [dev]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = 1.0 / (1.0 + np.exp(-eta))
        w = np.maximum(mu * (1.0 - mu), 1e-12)
        z = eta + (y - mu) / w
        sw = np.sqrt(w)
        beta_new = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)[0]
        new_dev = _deviance(y, X @ beta_new)
        halvings = 0
        while new_dev > dev + 1e-12 * max(1.0, abs(dev)) and halvings < 30:
            beta_new = (beta + beta_new) / 2.0
            new_dev = _deviance(y, X @ beta_new)
            halvings += 1
        beta, eta = beta_new, X @ beta_new
        trace.append(new_dev)
        change = abs(dev - new_dev)
        dev = new_dev
        if change < tol:
            converged = True
            break

    mu = 1.0 / (1.0 + np.exp(-eta))
    w = mu * (1.0 - mu)
    info = X.T @ (X * w[:, None])
    try:
        cov = np.linalg.inv(info)
        se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    except np.linalg.LinAlgError:
        se = np.full(q, np.inf)

    diagnostic = "" if converged else f"no convergence in {max_iter} iterations"
    # separation check on the coefficient scale of standardized predictors
    sd = X.std(axis=0)
    std_beta = np.where(sd > 0, beta * sd, 0.0)
    if np.any(np.abs(std_beta) > separation_bound):
        converged = False
        diagnostic = "possible (quasi-)complete separation"
    with np.errstate(divide="ignore", invalid="ignore"):
        zval = np.where(se > 0, beta / se, 0.0)
    pvals = np.array([min(1.0, 2.0 * std_normal_sf(abs(v))) for v in zval])
    return LogisticFit(names, beta, se, zval, pvals, converged, it, trace, diagnostic)


# -- report tables ----------------------------------------------------------------------

def contingency_table(labels, categories, label_prefix: str = "Subtype") -> str:
    """Cluster-by-category counts as CSV, with a ``count (share%)`` total column.

    Shares are relative to all subjects, two decimals.
    """
    labels = np.asarray(labels)
    categories = np.asarray(categories).astype(str)
    if labels.shape != categories.shape:
        raise ValueError("labels and categories differ in length")
    cats = list(dict.fromkeys(categories.tolist()))
    clusters = sorted(np.unique(labels).tolist())
    N = labels.size
    header = [""] + [f"{c} (n={int((categories == c).sum())})" for c in cats] + [f"Total (n={N})"]
    lines = [",".join(header)]
    for k in clusters:
        in_k = labels == k
        counts = [int((in_k & (categories == c)).sum()) for c in cats]
        total = int(in_k.sum())
        lines.append(",".join([f"{label_prefix} {k}", *map(str, counts), f"{total} ({100.0 * total / N:.2f}%)"]))
    return "\n".join(lines) + "\n"
