"""SMOTE oversampling and Tomek-link cleaning for imbalanced datasets.

Synthetic minority rows are interpolated between a minority point and one
of its k nearest minority neighbors; Tomek links (cross-class pairs that
are mutually nearest, with no strictly closer witness) then have their
majority member removed. Every synthetic row logs its parent pair and
interpolation coefficient so convex-combination and leakage checks can be
run after the fact. All distances are Euclidean on the raw feature vector.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError, DegenerateDataError

PROV_ORIGINAL = 0
PROV_SYNTHETIC = 1
_PROV_NAMES = {PROV_ORIGINAL: "original", PROV_SYNTHETIC: "synthetic"}


@dataclass
class LabeledDataset:
    """Dense feature matrix with binary labels and per-row provenance.

    For synthetic rows, parent_idx holds the two source-row indices *in the
    dataset the row was synthesized from* (stable even after later rows are
    removed) and parent_lam the interpolation coefficient; originals carry
    (-1, -1) and NaN.
    """

    features: np.ndarray
    labels: np.ndarray
    provenance: np.ndarray = None
    parent_idx: np.ndarray = None
    parent_lam: np.ndarray = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        n = self.features.shape[0]
        if self.labels.shape != (n,):
            raise ValueError("labels length disagrees with features")
        if not np.isfinite(self.features).all():
            raise ValueError("features contain non-finite entries")
        if not np.isin(self.labels, (0, 1)).all():
            raise ValueError("labels must be 0/1 bits")
        if self.provenance is None:
            self.provenance = np.full(n, PROV_ORIGINAL, dtype=np.int64)
        if self.parent_idx is None:
            self.parent_idx = np.full((n, 2), -1, dtype=np.int64)
        if self.parent_lam is None:
            self.parent_lam = np.full(n, np.nan)

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> tuple[int, int]:
        """(count of label 0, count of label 1)."""
        return int((self.labels == 0).sum()), int((self.labels == 1).sum())


@dataclass(frozen=True)
class ResampleConfig:
    k_neighbors: int = 5
    target_ratio: float = 1.0  # desired minority/majority ratio after SMOTE
    seed: int = 0

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise ConfigError("k_neighbors must be >= 1")
        if self.target_ratio <= 0:
            raise ConfigError("target_ratio must be positive")


def knn_indices(
    points: np.ndarray,
    query_row: int,
    k: int,
    restrict_to: Sequence[int] | None = None,
) -> np.ndarray:
    """The k rows nearest to points[query_row] by Euclidean distance.

    The query row itself is excluded; candidates may be limited to
    restrict_to. Exact distance ties resolve to the lower row index.
    """
    points = np.asarray(points, dtype=np.float64)
    if restrict_to is None:
        candidates = np.arange(points.shape[0])
    else:
        candidates = np.asarray(sorted(set(int(i) for i in restrict_to)))
    candidates = candidates[candidates != query_row]
    if k > len(candidates):
        raise ConfigError(f"k={k} exceeds the {len(candidates)} available neighbors")
    diffs = points[candidates] - points[query_row]
    d2 = np.einsum("ij,ij->i", diffs, diffs)
    order = np.lexsort((candidates, d2))
    return candidates[order[:k]]


def synthesize_point(x_i: np.ndarray, x_nn: np.ndarray, lam: float) -> np.ndarray:
    """Interpolated minority point x_i + lam * (x_nn - x_i), lam in [0, 1]."""
    return np.asarray(x_i, dtype=np.float64) + lam * (np.asarray(x_nn, dtype=np.float64) - x_i)


def _minority_label(labels: np.ndarray) -> int:
    n0 = int((labels == 0).sum())
    n1 = int((labels == 1).sum())
    return 1 if n1 <= n0 else 0


def smote_oversample(data: LabeledDataset, cfg: ResampleConfig) -> LabeledDataset:
    """Append interpolated minority rows until minority/majority hits target_ratio.

    Round-robins over minority rows in dataset order; for each synthetic
    point one of the row's k nearest minority neighbors is chosen uniformly
    and the interpolation coefficient drawn uniformly from [0, 1]. Original
    rows are untouched; synthetic rows carry provenance and parent logs.
    """
    minority = _minority_label(data.labels)
    min_rows = np.flatnonzero(data.labels == minority)
    maj_rows = np.flatnonzero(data.labels != minority)
    n_min, n_maj = len(min_rows), len(maj_rows)
    if n_min < 2:
        raise DegenerateDataError("cannot SMOTE a singleton minority class")
    if cfg.k_neighbors >= n_min:
        raise ConfigError(f"k_neighbors={cfg.k_neighbors} must be < minority count {n_min}")

    n_syn = max(0, int(round(cfg.target_ratio * n_maj)) - n_min)
    neighbors = [
        knn_indices(data.features, int(row), cfg.k_neighbors, restrict_to=min_rows)
        for row in min_rows
    ]

    rng = np.random.default_rng(cfg.seed)
    new_rows = np.empty((n_syn, data.n_features))
    new_parents = np.empty((n_syn, 2), dtype=np.int64)
    new_lams = np.empty(n_syn)
    for j in range(n_syn):
        i = int(min_rows[j % n_min])
        nn = int(neighbors[j % n_min][int(rng.integers(cfg.k_neighbors))])
        lam = float(rng.random())
        new_rows[j] = synthesize_point(data.features[i], data.features[nn], lam)
        new_parents[j] = (i, nn)
        new_lams[j] = lam

    return LabeledDataset(
        features=np.vstack([data.features, new_rows]),
        labels=np.concatenate([data.labels, np.full(n_syn, minority, dtype=np.int64)]),
        provenance=np.concatenate([data.provenance, np.full(n_syn, PROV_SYNTHETIC, dtype=np.int64)]),
        parent_idx=np.vstack([data.parent_idx, new_parents]),
        parent_lam=np.concatenate([data.parent_lam, new_lams]),
    )


def _pairwise_sqdist(X: np.ndarray) -> np.ndarray:
    # explicit difference formula (not the gram identity) so exact
    # coordinate ties produce exactly equal distances
    return _kernels.pairwise_sqdist(np.ascontiguousarray(X))


def find_tomek_links(data: LabeledDataset) -> list[tuple[int, int]]:
    """All cross-class pairs with no strictly closer witness to either member.

    (a, b) is a link iff labels differ and no point c satisfies
    d(a, c) < d(a, b) or d(b, c) < d(a, b). Pairs are reported once, lower
    index first, in lexicographic order.
    """
    X = data.features
    n = len(data)
    if n < 2:
        return []
    d2 = _pairwise_sqdist(X)
    np.fill_diagonal(d2, np.inf)
    nn_dist = d2.min(axis=1)
    mutual = (d2 == nn_dist[:, None]) & (d2 == nn_dist[None, :])
    cross = data.labels[:, None] != data.labels[None, :]
    hits = np.argwhere(np.triu(mutual & cross, k=1))
    return [(int(a), int(b)) for a, b in hits]


def smote_tomek_resample(data: LabeledDataset, cfg: ResampleConfig) -> LabeledDataset:
    """SMOTE to target_ratio, then drop the majority member of every Tomek link.

    The majority class is fixed from the input data (before oversampling).
    Minority rows, original or synthetic, are never removed.
    """
    majority = 1 - _minority_label(data.labels)
    over = smote_oversample(data, cfg)
    links = find_tomek_links(over)
    to_remove = set()
    for a, b in links:
        if over.labels[a] == majority:
            to_remove.add(a)
        if over.labels[b] == majority:
            to_remove.add(b)
    if not to_remove:
        return over
    keep = np.asarray([i for i in range(len(over)) if i not in to_remove], dtype=np.int64)
    return LabeledDataset(
        features=over.features[keep],
        labels=over.labels[keep],
        provenance=over.provenance[keep],
        parent_idx=over.parent_idx[keep],
        parent_lam=over.parent_lam[keep],
    )


def write_dataset_csv(data: LabeledDataset, path: str | Path) -> None:
    """Export features/label/provenance as CSV (feature_0..feature_{d-1})."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"feature_{j}" for j in range(data.n_features)] + ["label", "provenance"])
        for i in range(len(data)):
            row = [repr(float(v)) for v in data.features[i]]
            row.append(str(int(data.labels[i])))
            row.append(_PROV_NAMES[int(data.provenance[i])])
            writer.writerow(row)
