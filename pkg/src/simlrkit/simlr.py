"""Multi-kernel similarity learning by block-coordinate descent.

Minimizes

    -sum_{l,i,j} w_l K_l(i,j) theta_ij + rho1 tr(V'(I - theta)V)
        + rho2 ||theta||_F^2 + rho3 sum_l w_l log w_l

subject to row-stochastic nonnegative theta, V'V = I_K and w on the simplex.
Each block (theta, V, w) has a closed-form minimizer, so without the
interleaved diffusion step the objective never increases.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .graph import DiffusionConfig, NumericalError, diffuse, fix_signs, laplacian, sym_eigen, sym_eigvals
from .kernels import KernelSet

log = logging.getLogger(__name__)

RHO_FLOOR = 1e-12


@dataclass(frozen=True)
class SimlrConfig:
    K: int
    rho1: float
    rho2: float
    rho3: float = 1.0
    max_outer_iters: int = 30
    tol: float = 1e-6
    diffusion: DiffusionConfig | None = field(default_factory=DiffusionConfig)
    interleave_diffusion: bool = True
    # >1 enables the adaptive schedule: grow rho1 while sym(theta) has fewer
    # than K connected components, grow rho2 (denser rows) when it has more
    rho1_growth: float = 1.0
    component_tol: float = 1e-9

    def __post_init__(self):
        if self.K < 2:
            raise ValueError(f"K must be >= 2, got {self.K}")
        if self.rho1 < 0 or self.rho2 <= 0 or self.rho3 < 0:
            raise ValueError("rho1 >= 0, rho2 > 0 and rho3 >= 0 required")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")
        if self.rho1_growth < 1.0:
            raise ValueError("rho1_growth must be >= 1")


@dataclass(frozen=True)
class SimlrResult:
    theta: np.ndarray
    v: np.ndarray
    w: np.ndarray
    objective_trace: list[float]
    eigengap_trace: list[float]
    converged: bool
    iterations: int
    rho1_trace: list[float] = field(default_factory=list)
    rho2_trace: list[float] = field(default_factory=list)


def estimate_rho1(D: np.ndarray, k: int = 10) -> float:
    """Half the mean gap between each node's (k+1)-th and k-th neighbour distance.

    ``D`` holds squared distances; gaps are measured in plain Euclidean units.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if k < 1 or k + 1 > n - 1:
        raise ValueError(f"need k + 1 <= n - 1 (n={n}, k={k})")
    d = np.sqrt(np.maximum(D, 0.0))
    np.fill_diagonal(d, np.inf)
    d.sort(axis=1)
    gaps = d[:, k] - d[:, k - 1]
    return max(float(gaps.mean()) / 2.0, RHO_FLOOR)


def fused_similarity(kernels: KernelSet, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (kernels.m,):
        raise ValueError(f"expected {kernels.m} weights, got shape {w.shape}")
    return np.tensordot(w, kernels.kernels, axes=1)


def project_simplex(Y: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of ``Y`` onto the probability simplex.

    Sort-based: for a sorted row u, the threshold is
    (sum of the top-r entries - 1) / r with r the largest index keeping
    u_r above the threshold.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = Y.shape[1]
    U = -np.sort(-Y, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ranks = np.arange(1, n + 1)
    cond = U - css / ranks > 0
    r = n - np.argmax(cond[:, ::-1], axis=1)
    tau = css[np.arange(Y.shape[0]), r - 1] / r
    X = np.maximum(Y - tau[:, None], 0.0)
    # renormalize to remove rounding drift from the threshold
    return X / X.sum(axis=1, keepdims=True)


def update_theta(
    fused: np.ndarray, V: np.ndarray, rho1: float, rho2: float, exclude_self: bool = False
) -> np.ndarray:
    """Row-wise simplex projection of (fused + rho1 V V') / (2 rho2).

    With ``exclude_self`` the diagonal is held at zero (no self-loops) and
    each row is projected over its off-diagonal entries only.
    """
    if rho2 <= 0:
        raise ValueError("rho2 must be positive")
    C = (np.asarray(fused, dtype=float) + rho1 * (V @ V.T)) / (2.0 * rho2)
    if exclude_self:
        n = C.shape[0]
        off = ~np.eye(n, dtype=bool)
        rows = project_simplex(C[off].reshape(n, n - 1))
        theta = np.zeros_like(C)
        theta[off] = rows.ravel()
        return theta
    return project_simplex(C)


def update_v(theta: np.ndarray, K: int) -> np.ndarray:
    """Eigenvectors of the K smallest eigenvalues of I - sym(theta)."""
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must lie in [1, n], got {K}")
    A = np.eye(n) - (theta + theta.T) / 2.0
    _, vecs = sym_eigen(A)
    return fix_signs(vecs[:, :K])


def kernel_alignment(kernels: KernelSet, theta: np.ndarray) -> np.ndarray:
    """a_l = sum_ij K_l(i,j) theta_ij for every kernel."""
    return np.tensordot(kernels.kernels, np.asarray(theta, dtype=float), axes=([1, 2], [0, 1]))


def softmax_weights(a: np.ndarray, rho3: float) -> np.ndarray:
    if rho3 <= 0:
        raise ValueError("rho3 must be positive")
    z = np.asarray(a, dtype=float) / rho3
    e = np.exp(z - z.max())
    return e / e.sum()


def update_w(kernels: KernelSet, theta: np.ndarray, rho3: float) -> np.ndarray:
    return softmax_weights(kernel_alignment(kernels, theta), rho3)


def _entropy_term(w: np.ndarray) -> float:
    w = np.asarray(w, dtype=float)
    pos = w > 0
    return float(np.sum(w[pos] * np.log(w[pos])))


def objective(kernels: KernelSet, theta, v, w, rho1: float, rho2: float, rho3: float) -> float:
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    fit_term = -float(np.sum(fused_similarity(kernels, w) * theta))
    n = theta.shape[0]
    trace_term = float(np.trace(v.T @ (np.eye(n) - theta) @ v))
    ridge = float(np.sum(theta**2))
    return fit_term + rho1 * trace_term + rho2 * ridge + rho3 * _entropy_term(w)


def eigengap(theta: np.ndarray, K: int) -> float:
    """lambda_{K+1} - lambda_K of I - sym(theta), eigenvalues ascending."""
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[0]
    if K + 1 > n:
        raise ValueError("need K + 1 <= n")
    lam = sym_eigvals(np.eye(n) - (theta + theta.T) / 2.0)
    return max(float(lam[K] - lam[K - 1]), 0.0)


def _row_normalize(A: np.ndarray) -> np.ndarray:
    return A / A.sum(axis=1, keepdims=True)


def component_spectrum(theta: np.ndarray, K: int) -> tuple[float, float]:
    """(sum of the K smallest, the (K+1)-th smallest) Laplacian eigenvalues of sym(theta)."""
    lam = sym_eigvals(laplacian((theta + theta.T) / 2.0))
    return float(lam[:K].sum()), float(lam[K])


def fit(kernels: KernelSet, config: SimlrConfig) -> SimlrResult:
    """Alternate theta, V and w updates until the eigengap stops changing.

    Theta is learned without self-loops. With ``rho1_growth > 1`` the
    coupling weight rho1 grows after every sweep in which sym(theta) has
    fewer than K connected components, and rho2 grows when it has more;
    convergence then also requires both to have settled.
    """
    m = kernels.m
    K = config.K
    if m > 1 and config.rho3 <= 0:
        raise ValueError("rho3 must be positive when more than one kernel is given")
    if K + 1 > kernels.n:
        raise ValueError("need K + 1 <= n")
    diffusion = config.diffusion if config.interleave_diffusion else None
    rho1, rho2 = config.rho1, config.rho2

    w = np.full(m, 1.0 / m)
    theta = fused_similarity(kernels, w)
    np.fill_diagonal(theta, 0.0)
    theta = _row_normalize(theta)
    v = update_v(theta, K)

    def score(theta, v, w, rho1, rho2):
        val = objective(kernels, theta, v, w, rho1, rho2, config.rho3)
        if not np.isfinite(val):
            raise NumericalError("objective became non-finite")
        return val

    objectives = [score(theta, v, w, rho1, rho2)]
    gaps = [eigengap(theta, K)]
    rhos = [rho1]
    rhos2 = [rho2]
    converged = False
    it = 0
    for it in range(1, config.max_outer_iters + 1):
        fused = fused_similarity(kernels, w)
        theta = update_theta(fused, v, rho1, rho2, exclude_self=True)
        if diffusion is not None:
            theta = _row_normalize(diffuse(theta, diffusion))
        v = update_v(theta, K)
        if m > 1:
            w = update_w(kernels, theta, config.rho3)
        objectives.append(score(theta, v, w, rho1, rho2))
        gaps.append(eigengap(theta, K))
        settled = True
        if config.rho1_growth > 1.0:
            low, next_eig = component_spectrum(theta, K)
            if low > config.component_tol:
                rho1 *= config.rho1_growth
                settled = False
            elif next_eig < config.component_tol:
                # too many components: rows are too sparse, so spread them
                rho2 *= config.rho1_growth
                settled = False
        rhos.append(rho1)
        rhos2.append(rho2)
        log.debug("iter %d objective %.6g eigengap %.6g rho1 %.4g", it, objectives[-1], gaps[-1], rho1)
        if settled and abs(gaps[-1] - gaps[-2]) < config.tol:
            converged = True
            break
    return SimlrResult(theta, v, w, objectives, gaps, converged, it, rhos, rhos2)
