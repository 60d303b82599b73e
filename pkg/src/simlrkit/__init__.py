"""Similarity learning, graph diffusion and spectral clustering for cohort subtyping."""

__version__ = "0.1.0"

from .cluster import (
    ClusterAssignment,
    KSelectionResult,
    adjusted_rand_index,
    kmeans,
    ratio_cut,
    select_k,
    spectral_clustering,
)
from .graph import DiffusionConfig, diffuse, laplacian, spectral_embedding, sym_eigen, truncate_normalize
from .ingest import DataMatrix, PreprocessReport, drop_sparse_features, load_matrix, preprocess, winsorize_iqr, zscore
from .kernels import KernelSet, build_kernel_set, knn, pairwise_sq_dist
from .pipeline import METHODS, run_method
from .simlr import SimlrConfig, SimlrResult, estimate_rho1, fit
from .stats import anova_oneway, dunn_test, kruskal_wallis, logistic_fit, silhouette
from .synth import BlobSpec, PlantedGraphSpec, make_blobs, make_planted_similarity
