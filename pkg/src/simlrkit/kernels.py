"""Pairwise distances, exact nearest neighbours and the multi-scale Gaussian kernel bank."""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import DataError, DataMatrix

DEFAULT_SIGMAS = (1.0, 1.25, 1.5, 1.75, 2.0)
DEFAULT_KS = tuple(range(10, 31, 2))

_MAGIC = b"SKKB"
_VERSION = 1


@dataclass(frozen=True)
class NeighborLists:
    """Per-node neighbour indices and Euclidean distances, nearest first."""

    indices: np.ndarray
    distances: np.ndarray

    @property
    def k(self) -> int:
        return self.indices.shape[1]


@dataclass(frozen=True)
class KernelSet:
    kernels: np.ndarray  # (m, n, n)
    params: tuple[tuple[float, int], ...]  # (sigma, k) per kernel

    def __post_init__(self):
        kernels = np.asarray(self.kernels, dtype=float)
        if kernels.ndim == 2:
            kernels = kernels[None]
        if kernels.ndim != 3 or kernels.shape[1] != kernels.shape[2]:
            raise ValueError("kernels must have shape (m, n, n)")
        if kernels.shape[0] < 1:
            raise ValueError("kernel set is empty")
        if len(self.params) != kernels.shape[0]:
            raise ValueError("params length must equal the number of kernels")
        object.__setattr__(self, "kernels", kernels)
        object.__setattr__(self, "params", tuple((float(s), int(k)) for s, k in self.params))

    @property
    def m(self) -> int:
        return self.kernels.shape[0]

    @property
    def n(self) -> int:
        return self.kernels.shape[1]

    def __len__(self) -> int:
        return self.m


def pairwise_sq_dist(X) -> np.ndarray:
    """Squared Euclidean distances between the rows of ``X``.

    Accepts a DataMatrix (must have no masked cells) or a plain 2-D array.
    """
    if isinstance(X, DataMatrix):
        X = X.dense()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError("expected a 2-D array of points")
    if np.isnan(X).any():
        raise DataError("masked or NaN cells present")
    n = X.shape[0]
    d2 = np.empty((n, n))
    # explicit differences: exact zeros for duplicates, exact symmetry
    for i in range(n):
        diff = X - X[i]
        d2[i] = np.einsum("ij,ij->i", diff, diff)
    return d2


def _sorted_neighbors(D: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    D = np.array(D, dtype=float)
    np.fill_diagonal(D, np.inf)
    order = np.argsort(D, axis=1, kind="stable")[:, :-1]
    return order, np.take_along_axis(D, order, axis=1)


def knn(D: np.ndarray, k: int) -> NeighborLists:
    """Exact k nearest neighbours from a squared-distance matrix; ties go to the lower index."""
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must lie in [1, n-1] = [1, {n - 1}], got {k}")
    order, d2 = _sorted_neighbors(D)
    return NeighborLists(order[:, :k], np.sqrt(d2[:, :k]))


def build_kernel_set(
    D: np.ndarray,
    sigma_grid: Sequence[float] = DEFAULT_SIGMAS,
    k_grid: Sequence[int] = DEFAULT_KS,
) -> KernelSet:
    """Gaussian kernels with locally adaptive widths, one per (sigma, k) pair.

    For each pair the width between i and j is ``sigma * (mu_i + mu_j) / 2``
    where ``mu_i`` is the mean Euclidean distance from i to its k nearest
    neighbours. ``k`` is clamped to ``n - 1``.
    """
    D = np.asarray(D, dtype=float)
    n = D.shape[0]
    if not len(sigma_grid) or not len(k_grid):
        raise ValueError("sigma_grid and k_grid must be nonempty")
    if n < 2:
        raise ValueError("need at least two points")
    _, d2_sorted = _sorted_neighbors(D)
    cum = np.cumsum(np.sqrt(d2_sorted), axis=1)
    zero = D == 0

    kernels = np.empty((len(sigma_grid) * len(k_grid), n, n))
    params = []
    idx = 0
    for k in k_grid:
        kk = min(int(k), n - 1)
        if kk < 1:
            raise ValueError("k values must be positive")
        mu = cum[:, kk - 1] / kk
        mu_pair = (mu[:, None] + mu[None, :]) / 2.0
        for sigma in sigma_grid:
            eps = sigma * mu_pair
            with np.errstate(divide="ignore", invalid="ignore"):
                K = np.exp(-D / (2.0 * eps**2))
            degenerate = eps == 0
            if degenerate.any():
                K[degenerate] = np.where(zero[degenerate], 1.0, 0.0)
            K = (K + K.T) / 2.0
            np.fill_diagonal(K, 1.0)
            kernels[idx] = K
            params.append((float(sigma), int(k)))
            idx += 1
    return KernelSet(kernels, tuple(params))


def save_matrix_stack(path, stack: np.ndarray, params: Sequence[tuple[float, int]]) -> None:
    """Binary format: magic, version, n, m, m x (sigma f64, k i64), then row-major f64 data."""
    stack = np.ascontiguousarray(stack, dtype="<f8")
    if stack.ndim == 2:
        stack = stack[None]
    m, n, _ = stack.shape
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    with tmp.open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IQQ", _VERSION, n, m))
        for sigma, k in params:
            fh.write(struct.pack("<dq", float(sigma), int(k)))
        fh.write(stack.tobytes())
    os.replace(tmp, path)


def load_matrix_stack(path) -> tuple[np.ndarray, tuple[tuple[float, int], ...]]:
    with Path(path).open("rb") as fh:
        if fh.read(4) != _MAGIC:
            raise DataError(f"{path}: not a kernel-bank file")
        version, n, m = struct.unpack("<IQQ", fh.read(20))
        if version != _VERSION:
            raise DataError(f"{path}: unsupported version {version}")
        params = tuple(struct.unpack("<dq", fh.read(16)) for _ in range(m))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != m * n * n:
        raise DataError(f"{path}: truncated payload")
    return data.reshape(m, n, n).astype(float), params


def save_kernel_set(path, ks: KernelSet) -> None:
    save_matrix_stack(path, ks.kernels, ks.params)


def load_kernel_set(path) -> KernelSet:
    stack, params = load_matrix_stack(path)
    return KernelSet(stack, params)
