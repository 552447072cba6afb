"""Principal components analysis for projecting embeddings to low rank."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (rank, d), rows orthonormal
    explained_variance: np.ndarray  # descending

    @property
    def rank(self) -> int:
        return self.components.shape[0]


def fit_pca(points: np.ndarray, rank: int) -> PcaModel:
    """Top-`rank` eigenvectors of the mean-centered covariance matrix.

    Components are sorted by descending eigenvalue and sign-fixed so the
    largest-magnitude entry of each component is positive, making the fit
    reproducible across runs.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError("points must be a 2-D matrix")
    n, d = X.shape
    if n < 2:
        raise ConfigError("PCA needs at least 2 points")
    if not 1 <= rank <= min(n - 1, d):
        raise ConfigError(f"rank {rank} infeasible for {n}x{d} data (max {min(n - 1, d)})")

    mean = X.mean(axis=0)
    centered = X - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending
    order = np.argsort(eigvals, kind="stable")[::-1][:rank]
    variances = np.maximum(eigvals[order], 0.0)
    components = eigvecs[:, order].T
    for i in range(rank):
        pivot = int(np.argmax(np.abs(components[i])))
        if components[i, pivot] < 0:
            components[i] = -components[i]
    return PcaModel(mean=mean, components=components, explained_variance=variances)


def project_pca(model: PcaModel, points: np.ndarray) -> np.ndarray:
    """(points - mean) @ components.T -> (n, rank) coordinates."""
    X = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if X.shape[1] != model.mean.shape[0]:
        raise ShapeError(f"expected width {model.mean.shape[0]}, got {X.shape[1]}")
    return (X - model.mean) @ model.components.T
