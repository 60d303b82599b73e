"""K-means, unnormalized spectral clustering, RatioCut and self-tuning choice of K."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graph import NumericalError, laplacian, spectral_embedding, symmetrize, sym_eigen


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray  # values in 1..K
    K: int
    method: str = ""
    inertia_or_cost: float = float("nan")
    empty_clusters: tuple[int, ...] = ()

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if labels.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if labels.size and (labels.min() < 1 or labels.max() > self.K):
            raise ValueError(f"labels must lie in 1..{self.K}")
        object.__setattr__(self, "labels", labels)
        present = set(np.unique(labels).tolist())
        object.__setattr__(self, "empty_clusters", tuple(k for k in range(1, self.K + 1) if k not in present))

    @property
    def n(self) -> int:
        return self.labels.size

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K + 1)[1:]


@dataclass(frozen=True)
class KSelectionResult:
    candidate_ks: list[int]
    costs: list[float]
    chosen_k: int
    rule: str
    converged: list[bool]


def as_assignment(labels, K: int | None = None) -> ClusterAssignment:
    if isinstance(labels, ClusterAssignment):
        return labels
    labels = np.asarray(labels, dtype=int)
    return ClusterAssignment(labels, int(K if K is not None else labels.max()))


# -- k-means ------------------------------------------------------------------

def _sq_dists(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    d = (X * X).sum(1)[:, None] - 2.0 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((K, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    closest = _sq_dists(X, centers[:1])[:, 0]
    for k in range(1, K):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, n - 1)
        centers[k] = X[idx]
        closest = np.minimum(closest, _sq_dists(X, centers[k : k + 1])[:, 0])
    return centers


def _lloyd(X, centers, max_iters, tol):
    inertia_trace = []
    for _ in range(max_iters):
        d = _sq_dists(X, centers)
        labels = d.argmin(axis=1)
        inertia_trace.append(float(d[np.arange(len(X)), labels].sum()))
        new = centers.copy()
        for k in range(len(centers)):
            members = labels == k
            if members.any():
                new[k] = X[members].mean(axis=0)
        empty = [k for k in range(len(centers)) if not (labels == k).any()]
        if empty:
            # re-seed each empty centroid at the point farthest from its own centroid
            far = d[np.arange(len(X)), labels]
            for k in empty:
                idx = int(far.argmax())
                new[k] = X[idx]
                far[idx] = -1.0
        shift = float(np.sqrt(((new - centers) ** 2).sum(axis=1)).max())
        centers = new
        if shift < tol and not empty:
            break
    d = _sq_dists(X, centers)
    labels = d.argmin(axis=1)
    # exact inertia from explicit differences
    inertia = float(((X - centers[labels]) ** 2).sum())
    inertia_trace.append(inertia)
    return labels, centers, inertia, inertia_trace


def kmeans(
    points,
    K: int,
    seed: int = 0,
    n_init: int = 10,
    max_iters: int = 300,
    tol: float = 1e-6,
    return_centers: bool = False,
):
    """Best-of-``n_init`` k-means++ seeded Lloyd runs, deterministic per seed."""
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not np.isfinite(X).all():
        raise ValueError("points contain non-finite values")
    if not 1 <= K <= n:
        raise ValueError(f"K must lie in [1, n={n}], got {K}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        centers = _kmeans_pp(X, K, rng)
        labels, centers, inertia, _ = _lloyd(X, centers, max_iters, tol)
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia)
    labels, centers, inertia = best
    result = ClusterAssignment(labels + 1, K, "kmeans", inertia)
    return (result, centers) if return_centers else result


# -- spectral clustering -------------------------------------------------------

def spectral_clustering(theta, K: int, seed: int = 0, n_init: int = 10) -> ClusterAssignment:
    """k-means on the rows of the K smallest Laplacian eigenvectors of sym(theta).

    ``inertia_or_cost`` holds trace(V'LV) of the relaxed solution.
    """
    theta = symmetrize(theta)
    n = theta.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must lie in [1, n={n}], got {K}")
    V = spectral_embedding(theta, K)
    relaxed = float(np.trace(V.T @ laplacian(theta) @ V))
    labels = kmeans(V, K, seed=seed, n_init=n_init).labels
    return ClusterAssignment(labels, K, "spectral", relaxed)


def partition_matrix(labels: ClusterAssignment) -> np.ndarray:
    labels = as_assignment(labels)
    sizes = labels.sizes()
    if (sizes == 0).any():
        raise ValueError("empty cluster in partition")
    V = np.zeros((labels.n, labels.K))
    V[np.arange(labels.n), labels.labels - 1] = 1.0 / np.sqrt(sizes[labels.labels - 1])
    return V


def ratio_cut(theta, labels) -> float:
    """Sum over clusters of cut(C, rest) / |C|."""
    theta = np.asarray(theta, dtype=float)
    labels = as_assignment(labels)
    if labels.empty_clusters:
        raise ValueError(f"empty clusters: {labels.empty_clusters}")
    total = 0.0
    for k in range(1, labels.K + 1):
        inside = labels.labels == k
        total += theta[np.ix_(inside, ~inside)].sum() / inside.sum()
    return float(total)


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected Rand index between two labelings."""
    a = np.asarray(a.labels if isinstance(a, ClusterAssignment) else a)
    b = np.asarray(b.labels if isinstance(b, ClusterAssignment) else b)
    if a.shape != b.shape:
        raise ValueError("labelings differ in length")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)

    def pairs(x):
        return float((x * (x - 1) // 2).sum())

    index = pairs(table)
    row, col = pairs(table.sum(1)), pairs(table.sum(0))
    total = a.size * (a.size - 1) / 2
    expected = row * col / total if total else 0.0
    max_index = (row + col) / 2
    if max_index == expected:
        return 1.0
    return (index - expected) / (max_index - expected)


# -- self-tuning K -------------------------------------------------------------

def _givens_pairs(K: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(K - 1) for j in range(i + 1, K)]


def rotation_from_angles(angles: np.ndarray, K: int) -> np.ndarray:
    Q = np.eye(K)
    for theta, (i, j) in zip(angles, _givens_pairs(K)):
        c, s = math.cos(theta), math.sin(theta)
        qi, qj = Q[:, i].copy(), Q[:, j].copy()
        Q[:, i] = c * qi - s * qj
        Q[:, j] = s * qi + c * qj
    return Q


def separation_cost(Z: np.ndarray, zero_tol: float = 1e-12) -> float:
    """sum_ij Z_ij^2 / max_j |Z_ij|^2; an all-zero row contributes 1."""
    Z = np.asarray(Z, dtype=float)
    M = np.abs(Z).max(axis=1)
    scale = max(float(M.max()), 1e-300)
    ok = M > zero_tol * scale
    cost = float(np.sum((Z[ok] ** 2).sum(axis=1) / M[ok] ** 2))
    return cost + float((~ok).sum())


def minimize_rotation_cost(
    Y: np.ndarray,
    step: float = 0.1,
    max_sweeps: int = 200,
    tol: float = 1e-6,
    fd_eps: float = 1e-6,
) -> tuple[float, np.ndarray, bool]:
    """Coordinate descent on Givens angles with central-difference slopes.

    Returns (cost, rotation, converged).
    """
    Y = np.asarray(Y, dtype=float)
    K = Y.shape[1]
    if K == 1:
        return separation_cost(Y), np.eye(1), True
    pairs = _givens_pairs(K)
    angles = np.zeros(len(pairs))

    def givens(theta, i, j):
        G = np.eye(K)
        c, s = math.cos(theta), math.sin(theta)
        G[i, i] = G[j, j] = c
        G[j, i], G[i, j] = -s, s
        return G

    current = separation_cost(Y @ rotation_from_angles(angles, K))
    steps = np.full(len(pairs), step)
    converged = False
    for _ in range(max_sweeps):
        start = current
        # Q = G_0 ... G_{m-1}; while angle p moves, Y @ Q = (Y @ prefix) @ G_p @ suffix
        suffixes = [np.eye(K)]
        for q in range(len(pairs) - 1, 0, -1):
            suffixes.append(givens(angles[q], *pairs[q]) @ suffixes[-1])
        suffixes.reverse()
        U = Y.copy()
        for p, (i, j) in enumerate(pairs):
            B = suffixes[p]
            ui, uj = U[:, i].copy(), U[:, j].copy()

            def cost_at(theta):
                c, s = math.cos(theta), math.sin(theta)
                Ur = U.copy()
                Ur[:, i] = c * ui - s * uj
                Ur[:, j] = s * ui + c * uj
                return separation_cost(Ur @ B)

            slope = (cost_at(angles[p] + fd_eps) - cost_at(angles[p] - fd_eps)) / (2 * fd_eps)
            if slope != 0.0:
                direction = math.copysign(1.0, slope)
                trial = angles[p] - steps[p] * direction
                c = cost_at(trial)
                # backtrack until the move helps, then allow the step to grow again
                while c >= current and steps[p] > 1e-8:
                    steps[p] /= 2.0
                    trial = angles[p] - steps[p] * direction
                    c = cost_at(trial)
                if c < current:
                    angles[p], current = trial, c
                    steps[p] = min(steps[p] * 1.5, math.pi / 4)
            cth, sth = math.cos(angles[p]), math.sin(angles[p])
            U[:, i] = cth * ui - sth * uj
            U[:, j] = sth * ui + cth * uj
        if start - current < tol:
            converged = True
            break
    return current, rotation_from_angles(angles, K), converged


def select_k(theta, k_min: int = 2, k_max: int = 10, rule: str = "argmin", rel_tol: float = 1e-9) -> KSelectionResult:
    """Score each K by the minimized separation cost of its Laplacian eigenvectors.

    ``argmin`` picks the lowest cost, preferring the larger K among costs
    within ``rel_tol`` of the minimum. ``largest-drop`` picks the K
    maximizing cost(K-1) - cost(K) over the candidate range.
    """
    theta = symmetrize(theta)
    n = theta.shape[0]
    if not 2 <= k_min <= k_max <= n:
        raise ValueError(f"need 2 <= k_min <= k_max <= n={n}")
    if rule not in ("argmin", "largest-drop"):
        raise ValueError(f"unknown rule {rule!r}")
    _, vecs = sym_eigen(laplacian(theta))
    ks = list(range(k_min, k_max + 1))
    costs, flags = [], []
    for K in ks:
        c, _, ok = minimize_rotation_cost(vecs[:, :K])
        if not np.isfinite(c):
            raise NumericalError(f"non-finite separation cost at K={K}")
        costs.append(c)
        flags.append(ok)
    arr = np.array(costs)
    if rule == "argmin":
        best = arr.min()
        near = np.flatnonzero(arr <= best + rel_tol * abs(best))
        chosen = ks[int(near.max())]
    else:
        if len(ks) < 2:
            chosen = ks[0]
        else:
            drops = arr[:-1] - arr[1:]
            chosen = ks[int(np.argmax(drops)) + 1]
    return KSelectionResult(ks, costs, chosen, rule, flags)
