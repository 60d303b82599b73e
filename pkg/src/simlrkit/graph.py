"""Graph primitives: Laplacian, spectral embedding, eigensolver and KNN graph diffusion."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .ingest import DataError, atomic_write_text


class NumericalError(RuntimeError):
    """A numerical routine failed or produced non-finite output."""


@dataclass(frozen=True)
class DiffusionConfig:
    tau: float = 0.8
    N: int = 10
    T: int = 20
    tol: float = 1e-9

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        if self.N < 1:
            raise ValueError(f"N must be >= 1, got {self.N}")
        # T = 0 is allowed and means "no diffusion steps"
        if self.T < 0:
            raise ValueError(f"T must be >= 0, got {self.T}")


def symmetrize(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return (A + A.T) / 2.0


def fix_signs(V: np.ndarray, rel_tol: float = 1e-10) -> np.ndarray:
    """Flip columns so that the first non-negligible entry of each is positive."""
    V = np.array(V, dtype=float)
    for j in range(V.shape[1]):
        col = V[:, j]
        thresh = rel_tol * max(np.abs(col).max(), 1e-300)
        nz = np.flatnonzero(np.abs(col) > thresh)
        if nz.size and col[nz[0]] < 0:
            V[:, j] = -col
    return V


def sym_eigen(A: np.ndarray, sym_tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    Backed by LAPACK's symmetric driver through ``numpy.linalg.eigh``; the
    input is exactly symmetrized after the tolerance check.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("expected a square matrix")
    if not np.isfinite(A).all():
        raise NumericalError("matrix has non-finite entries")
    scale = max(1.0, float(np.abs(A).max()))
    if np.abs(A - A.T).max() > sym_tol * scale:
        raise ValueError("matrix is not symmetric")
    try:
        w, V = np.linalg.eigh((A + A.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    return w, V


def sym_eigvals(A: np.ndarray) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix (no eigenvectors)."""
    A = np.asarray(A, dtype=float)
    if not np.isfinite(A).all():
        raise NumericalError("matrix has non-finite entries")
    try:
        return np.linalg.eigvalsh((A + A.T) / 2.0)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc


def laplacian(theta: np.ndarray) -> np.ndarray:
    """Unnormalized Laplacian D - theta of a symmetric nonnegative matrix."""
    theta = np.asarray(theta, dtype=float)
    L = -theta.copy()
    L[np.diag_indices_from(L)] += theta.sum(axis=1)
    return L


def spectral_embedding(theta: np.ndarray, K: int) -> np.ndarray:
    """Eigenvectors of the K smallest eigenvalues of the Laplacian of sym(theta)."""
    theta = symmetrize(theta)
    n = theta.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must lie in [1, n], got {K}")
    _, V = sym_eigen(laplacian(theta))
    return fix_signs(V[:, :K])


def _top_neighbors(theta: np.ndarray, N: int) -> np.ndarray:
    n = theta.shape[0]
    score = np.array(theta, dtype=float)
    np.fill_diagonal(score, -np.inf)
    # stable sort on the negated row: larger similarity first, then lower index
    order = np.argsort(-score, axis=1, kind="stable")
    return order[:, : min(N, n - 1)]


def truncate_normalize(theta: np.ndarray, N: int) -> np.ndarray:
    """Row-stochastic transition matrix restricted to each node's top-N neighbours."""
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[0]
    if N < 1:
        raise ValueError("N must be >= 1")
    if (theta < 0).any():
        raise ValueError("similarity must be nonnegative")
    nbrs = _top_neighbors(theta, N)
    rows = np.arange(n)[:, None]
    P = np.zeros_like(theta)
    P[rows, nbrs] = theta[rows, nbrs]
    sums = P.sum(axis=1)
    bad = np.flatnonzero(sums <= 0)
    if bad.size:
        raise NumericalError(f"row {bad[0]} has no positive similarity among its top {N} neighbours")
    return P / sums[:, None]


def diffuse(theta: np.ndarray, config: DiffusionConfig = DiffusionConfig(), return_trace: bool = False):
    """Iterate S <- tau * S @ P + (1 - tau) * I starting from theta; return sym(S).

    Stops early once successive iterates differ by less than ``config.tol``
    in Frobenius norm. With ``return_trace`` the unsymmetrized iterates are
    returned as a second value.
    """
    theta = np.asarray(theta, dtype=float)
    n = theta.shape[0]
    S = theta.copy()
    trace = [S]
    if config.T > 0:
        # P has at most N nonzeros per row: S @ P == (P' S')'
        Pt = sparse.csr_matrix(truncate_normalize(theta, config.N).T)
        eye = np.eye(n)
        for _ in range(config.T):
            S_next = config.tau * np.asarray(Pt @ S.T).T + (1.0 - config.tau) * eye
            delta = np.linalg.norm(S_next - S)
            S = S_next
            if return_trace:
                trace.append(S)
            if delta < config.tol:
                break
    out = symmetrize(S)
    return (out, trace) if return_trace else out


def block_mass_ratio(theta: np.ndarray, labels) -> float:
    """Off-block over in-block Frobenius mass of a similarity matrix (diagonal excluded)."""
    theta = np.asarray(theta, dtype=float)
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(len(labels), dtype=bool)
    inside = np.sqrt(np.sum(theta[same & off_diag] ** 2))
    outside = np.sqrt(np.sum(theta[~same] ** 2))
    return float(outside / inside)


def write_dense_csv(path, A: np.ndarray) -> None:
    """Headerless comma-separated dump, one matrix row per line."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    text = "\n".join(",".join(repr(float(v)) for v in row) for row in A) + "\n"
    atomic_write_text(path, text)


def read_dense_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError:
            raise DataError(f"{path}:{lineno}: non-numeric entry") from None
    if not rows:
        raise DataError(f"{path}: empty matrix")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise DataError(f"{path}: ragged rows")
    return np.array(rows)
