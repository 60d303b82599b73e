"""Synthetic cohorts and planted similarity matrices with known ground truth.

All generators draw from numpy's PCG64 bit generator seeded with the
configuration's ``seed``; files written by :func:`write_blobs` record that in a sidecar.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import DataMatrix, atomic_write_text, write_matrix

RNG_NAME = "numpy.random.PCG64"


@dataclass(frozen=True)
class BlobSpec:
    K: int
    n_per_cluster: Sequence[int]
    p: int
    center_scale: float = 10.0
    noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        counts = list(self.n_per_cluster) if np.ndim(self.n_per_cluster) else [int(self.n_per_cluster)] * self.K
        object.__setattr__(self, "n_per_cluster", tuple(int(c) for c in counts))
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if len(self.n_per_cluster) != self.K:
            raise ValueError("n_per_cluster must have K entries")
        if any(c <= 0 for c in self.n_per_cluster):
            raise ValueError("cluster sizes must be positive")
        if self.p < 1:
            raise ValueError("p must be >= 1")
        if self.noise_std < 0:
            raise ValueError("noise_std must be nonnegative")


@dataclass(frozen=True)
class PlantedGraphSpec:
    block_sizes: Sequence[int]
    in_weight: float = 1.0
    out_weight: float = 0.0
    noise_amplitude: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "block_sizes", tuple(int(b) for b in self.block_sizes))
        if not self.block_sizes or any(b <= 0 for b in self.block_sizes):
            raise ValueError("block sizes must be positive")
        if not self.in_weight > self.out_weight >= 0:
            raise ValueError("need in_weight > out_weight >= 0")
        if self.noise_amplitude < 0:
            raise ValueError("noise_amplitude must be nonnegative")


def make_blobs(spec: BlobSpec, max_draws: int = 1000) -> tuple[DataMatrix, np.ndarray]:
    """Gaussian clusters around uniformly drawn, well-separated centers.

    Labels are 1..K. Centers are redrawn until every pair is at least
    ``4 * noise_std`` apart.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    min_sep = 4.0 * spec.noise_std
    for _ in range(max_draws):
        centers = rng.uniform(-spec.center_scale, spec.center_scale, size=(spec.K, spec.p))
        diff = centers[:, None, :] - centers[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        if spec.K == 1 or dist[np.triu_indices(spec.K, 1)].min() >= min_sep:
            break
    else:
        raise ValueError(f"could not place {spec.K} centers {min_sep} apart in {max_draws} draws")
    labels = np.repeat(np.arange(1, spec.K + 1), spec.n_per_cluster)
    points = centers[labels - 1] + spec.noise_std * rng.standard_normal((labels.size, spec.p))
    width = len(str(labels.size))
    X = DataMatrix.from_array(
        points,
        subject_ids=[f"S{i:0{width}d}" for i in range(labels.size)],
        feature_names=[f"f{j + 1}" for j in range(spec.p)],
    )
    return X, labels


def make_planted_similarity(spec: PlantedGraphSpec) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    labels = np.repeat(np.arange(1, len(spec.block_sizes) + 1), spec.block_sizes)
    same = labels[:, None] == labels[None, :]
    S = np.where(same, spec.in_weight, spec.out_weight).astype(float)
    n = labels.size
    if spec.noise_amplitude > 0:
        noise = np.triu(rng.uniform(0.0, spec.noise_amplitude, size=(n, n)), 1)
        S = S + noise + noise.T
    np.fill_diagonal(S, spec.in_weight)
    return np.maximum(S, 0.0), labels


def write_labels(path, subject_ids, labels, header=("subject_id", "label")) -> None:
    lines = [",".join(header)] + [f"{sid},{int(lab)}" for sid, lab in zip(subject_ids, labels)]
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_blobs(spec: BlobSpec, features_path, labels_path) -> tuple[DataMatrix, np.ndarray]:
    X, labels = make_blobs(spec)
    write_matrix(X, features_path, id_column="subject_id")
    write_labels(labels_path, X.subject_ids, labels)
    meta = {"generator": RNG_NAME, "numpy_version": np.__version__, "spec": asdict(spec)}
    meta_path = Path(features_path).with_name(Path(features_path).name + ".meta.json")
    atomic_write_text(meta_path, json.dumps(meta, indent=2))
    return X, labels
