"""
Describing the subtypes
=======================

Once subjects carry a subtype label, each clinical variable gets an ANOVA
and a Kruskal-Wallis test across subtypes, then Dunn's pairwise
comparisons. A logistic model asks whether a variant separates two groups
after adjusting for a covariate.
"""

import numpy as np

from simlrkit import anova_oneway, dunn_test, kruskal_wallis, logistic_fit
from simlrkit.stats import GroupedSamples, contingency_table

rng = np.random.default_rng(7)
subtype = np.repeat([1, 2, 3], [80, 60, 40])
diagnosis = np.where(rng.random(subtype.size) < np.array([0.2, 0.5, 0.8])[subtype - 1], "AD", "MCI")
print(contingency_table(subtype, diagnosis))

# a score that drifts upward with subtype
score = rng.normal(20, 4, size=subtype.size) + 3 * subtype
g = GroupedSamples.from_labels(score, subtype)
an, kw = anova_oneway(g), kruskal_wallis(g)
print(f"ANOVA F={an.statistic:.2f} p={an.p_value:.2e}   Kruskal-Wallis H={kw.statistic:.2f} p={kw.p_value:.2e}")
for r in dunn_test(g):
    print(f"  {r.group_a} vs {r.group_b}: z={r.z:+.2f}  Bonferroni p={r.p_adjusted:.3g}")

# %%
# Variant carriers are more common in subtype 3 than in subtype 1.
pick = subtype != 2
y = (subtype[pick] == 3).astype(float)
age = rng.normal(72, 7, size=pick.sum())
carrier = (rng.random(pick.sum()) < np.where(y == 1, 0.45, 0.2)).astype(float)
fit = logistic_fit(y, np.column_stack([np.ones_like(y), carrier, age]), ["intercept", "carrier", "age"])
for name, b, se, p in zip(fit.names, fit.coefficients, fit.standard_errors, fit.p_values):
    print(f"  {name:9s} {b:+.3f} (SE {se:.3f})  p={p:.3g}")
