"""The five compared clustering routes behind one entry point."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import simlr as simlr_mod
from .cluster import ClusterAssignment, kmeans
from .graph import DiffusionConfig, diffuse, spectral_embedding, symmetrize
from .kernels import DEFAULT_KS, DEFAULT_SIGMAS, KernelSet, build_kernel_set, pairwise_sq_dist
from .stats import silhouette

METHODS = ("kmeans", "sc", "sc-diffusion", "simlr", "simlr-diffusion")
GRAPH_METHODS = METHODS[1:]


@dataclass
class MethodResult:
    method: str
    assignment: ClusterAssignment
    embedding: np.ndarray
    similarity: np.ndarray | None
    silhouette: float | None
    simlr: simlr_mod.SimlrResult | None = None
    seconds: float = 0.0
    notes: list[str] = field(default_factory=list)


def row_normalize(A: np.ndarray) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return A / A.sum(axis=1, keepdims=True)


def base_similarity(kernels: KernelSet) -> np.ndarray:
    """Row-normalized uniform-weight fusion of the kernel bank."""
    return row_normalize(simlr_mod.fused_similarity(kernels, np.full(kernels.m, 1.0 / kernels.m)))


def default_simlr_config(
    D: np.ndarray,
    K: int,
    interleave: bool,
    diffusion: DiffusionConfig | None = None,
    rho_k: int = 10,
    **overrides,
) -> simlr_mod.SimlrConfig:
    """rho1 from the neighbour distance gap, rho2 = rho1, rho3 = 1.

    rho1 is then adapted (x1.5 per sweep) until theta has K components.
    """
    n = D.shape[0]
    rho1 = simlr_mod.estimate_rho1(D, min(rho_k, n - 2))
    params = dict(
        K=K,
        rho1=rho1,
        rho2=rho1,
        rho3=1.0,
        diffusion=diffusion or DiffusionConfig(),
        interleave_diffusion=interleave,
        rho1_growth=1.5,
    )
    params.update(overrides)
    return simlr_mod.SimlrConfig(**params)


def run_method(
    X: np.ndarray,
    method: str,
    K: int,
    seed: int = 0,
    diffusion: DiffusionConfig | None = None,
    kernels: KernelSet | None = None,
    D: np.ndarray | None = None,
    simlr_overrides: dict | None = None,
) -> MethodResult:
    """Cluster the rows of ``X`` with one of :data:`METHODS`.

    Graph methods embed with the K smallest eigenvectors of D - theta and
    report the silhouette on that embedding; k-means reports it on ``X``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    X = np.asarray(X, dtype=float)
    diffusion = diffusion or DiffusionConfig()
    start = time.perf_counter()
    notes = []
    fit = None
    if method == "kmeans":
        assignment = kmeans(X, K, seed=seed)
        embedding, theta = X, None
    else:
        if D is None:
            D = pairwise_sq_dist(X)
        if kernels is None:
            kernels = build_kernel_set(D, DEFAULT_SIGMAS, DEFAULT_KS)
        if method == "sc":
            theta = symmetrize(base_similarity(kernels))
        elif method == "sc-diffusion":
            theta = diffuse(base_similarity(kernels), diffusion)
        else:
            config = default_simlr_config(
                D, K, interleave=method == "simlr-diffusion", diffusion=diffusion, **(simlr_overrides or {})
            )
            fit = simlr_mod.fit(kernels, config)
            theta = symmetrize(fit.theta)
            notes.append(f"rho1=rho2={config.rho1:.6g} iterations={fit.iterations} converged={fit.converged}")
        embedding = spectral_embedding(theta, K)
        assignment = kmeans(embedding, K, seed=seed)
        assignment = ClusterAssignment(assignment.labels, K, method, assignment.inertia_or_cost)
    sil = silhouette(embedding, assignment) if K >= 2 and len(np.unique(assignment.labels)) >= 2 else None
    return MethodResult(method, assignment, embedding, theta, sil, fit, time.perf_counter() - start, notes)
