"""
Choosing the number of clusters
===============================

For each candidate K the leading Laplacian eigenvectors are rotated to look
as much like cluster indicators as possible. The leftover cost is n when
every row has a single nonzero entry.
"""

from simlrkit import PlantedGraphSpec, make_planted_similarity, select_k

S, _ = make_planted_similarity(PlantedGraphSpec([20] * 5, in_weight=1.0, noise_amplitude=0.3, seed=3))
res = select_k(S, 2, 10)
for K, c, ok in zip(res.candidate_ks, res.costs, res.converged):
    print(f"K={K:2d}  cost {c:9.3f}{'' if ok else '  (not converged)'}")
print("argmin rule:", res.chosen_k)
print("largest-drop rule:", select_k(S, 2, 10, rule="largest-drop").chosen_k)
