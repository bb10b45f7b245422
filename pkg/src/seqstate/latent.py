"""Analysis of the trained initial-state table as a latent embedding.

Each sequence's trained initial hidden state is a point in H-dimensional
space; nearby points correspond to sequences the model found similar. This
module projects the table with PCA for 2-D inspection, correlates target
series, ranks nearest neighbors (always in the full latent space, PCA is
only for plotting), and summarizes how well latent distance tracks target
dissimilarity.

PCA uses a cyclic Jacobi eigendecomposition of the sample covariance: for
table sizes here (H <= a few hundred) it is plenty fast and, unlike
randomized methods, gives the same answer on every run.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .model import ModelParams
from .numerics import ShapeError


class ConstantInputError(ValueError):
    """Correlation is undefined for a constant sequence."""


@dataclass
class LatentEmbedding:
    ids: list[str]
    vectors: np.ndarray              # (N, H)
    labels: list[str] | None = None

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2:
            raise ValueError(f"vectors must be 2-D, got shape {self.vectors.shape}")
        if len(self.ids) != self.vectors.shape[0]:
            raise ValueError(
                f"{len(self.ids)} ids but {self.vectors.shape[0]} vectors"
            )
        if self.labels is not None and len(self.labels) != len(self.ids):
            raise ValueError(f"{len(self.labels)} labels for {len(self.ids)} ids")

    def index_of(self, seq_id: str) -> int:
        try:
            return self.ids.index(seq_id)
        except ValueError:
            raise KeyError(f"unknown sequence id {seq_id!r}") from None


def embedding_from_params(
    params: ModelParams, ids: list[str], labels: list[str] | None = None
) -> LatentEmbedding:
    if len(ids) != params.num_sequences:
        raise ValueError(f"{len(ids)} ids for {params.num_sequences} table rows")
    return LatentEmbedding(ids=list(ids), vectors=params.h0_table.copy(), labels=labels)


@dataclass
class PcaResult:
    components: np.ndarray           # (d, H), orthonormal rows
    explained_variance: np.ndarray   # (d,), descending
    projections: np.ndarray          # (N, d)
    mean: np.ndarray                 # (H,)


def _jacobi_eigh(a: np.ndarray, max_sweeps: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues/vectors of a symmetric matrix by cyclic Jacobi rotations.

    Returns (values, vectors) with values descending and vectors as rows.
    Deterministic: fixed sweep order, fixed convergence threshold.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ShapeError(f"matrix must be square, got {a.shape}")
    v = np.eye(n)
    if n == 1:
        return a[0].copy(), v
    scale = np.sqrt(np.sum(a * a))
    if scale == 0.0:
        return np.zeros(n), v
    tol = 1e-14 * scale
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(a * a) - np.sum(np.diag(a) ** 2))
        if off <= tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(tau) / (abs(tau) + np.sqrt(1.0 + tau * tau)) if tau != 0.0 else 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                cp = a[:, p].copy()
                cq = a[:, q].copy()
                a[:, p] = c * cp - s * cq
                a[:, q] = s * cp + c * cq
                vp = v[p, :].copy()
                vq = v[q, :].copy()
                v[p, :] = c * vp - s * vq
                v[q, :] = s * vp + c * vq
    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], v[order]


def pca(embedding: LatentEmbedding, d: int) -> PcaResult:
    """Project the embedding onto its top-d principal directions.

    Sign convention: each component's largest-magnitude coordinate is made
    positive, so results are reproducible across runs.
    """
    x = embedding.vectors
    n, h = x.shape
    if n < 2:
        raise ValueError(f"PCA needs at least 2 points, got {n}")
    if not (1 <= d <= min(n, h)):
        raise ValueError(f"d must be in [1, {min(n, h)}], got {d}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (n - 1)
    values, vectors = _jacobi_eigh(cov)
    comps = vectors[:d].copy()
    for row in comps:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0.0:
            row *= -1.0
    variances = np.clip(values[:d], 0.0, None)
    return PcaResult(
        components=comps,
        explained_variance=variances,
        projections=centered @ comps.T,
        mean=mean,
    )


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Sample correlation coefficient in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"inputs must be equal-length vectors, got {a.shape} vs {b.shape}")
    if len(a) < 2:
        raise ShapeError(f"need at least 2 samples, got {len(a)}")
    da = a - a.mean()
    db = b - b.mean()
    va = float(da @ da)
    vb = float(db @ db)
    if va == 0.0 or vb == 0.0:
        raise ConstantInputError("correlation is undefined for a constant input")
    if np.array_equal(a, b):
        return 1.0
    r = float(da @ db) / np.sqrt(va * vb)
    return float(min(1.0, max(-1.0, r)))


def correlation_map(dataset: Dataset, target_id: str) -> list[tuple[str, float]]:
    """Correlation of every sequence's targets against the target sequence."""
    k = dataset.index_of(target_id)
    base = dataset.targets[k]
    return [
        (sid, pearson(dataset.targets[j], base))
        for j, sid in enumerate(dataset.ids)
    ]


def neighbors(
    embedding: LatentEmbedding, target_id: str, k: int
) -> list[tuple[str, float]]:
    """The k nearest other rows by Euclidean distance in full latent space.

    Ascending by distance, ties broken by lowest index. The target row
    itself is excluded; an identical duplicate ranks first with distance 0.
    """
    idx = embedding.index_of(target_id)
    n = embedding.vectors.shape[0]
    if not (0 <= k < n):
        raise ValueError(f"k must be in [0, {n - 1}], got {k}")
    diffs = embedding.vectors - embedding.vectors[idx]
    dists = np.sqrt(np.sum(diffs * diffs, axis=1))
    order = [j for j in np.argsort(dists, kind="stable") if j != idx]
    return [(embedding.ids[j], float(dists[j])) for j in order[:k]]


def _ranks(x: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties averaged."""
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Spearman rank correlation: Pearson on tie-averaged ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError(f"inputs must be equal-length vectors, got {x.shape} vs {y.shape}")
    return pearson(_ranks(x), _ranks(y))


def distance_correlation_stat(embedding: LatentEmbedding, dataset: Dataset) -> float:
    """Rank agreement between latent distances and target dissimilarities.

    Over all pairs (j, k): Spearman correlation between the latent
    Euclidean distance and 1 - pearson(targets_j, targets_k). Positive
    values mean nearby latent points correspond to correlated series.
    """
    n = embedding.vectors.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 sequences, got {n}")
    if embedding.ids != dataset.ids:
        raise ValueError("embedding and dataset ids are not aligned")
    dists = []
    dissims = []
    for j in range(n):
        for k in range(j + 1, n):
            d = embedding.vectors[j] - embedding.vectors[k]
            dists.append(float(np.sqrt(d @ d)))
            dissims.append(1.0 - pearson(dataset.targets[j], dataset.targets[k]))
    return spearman(np.array(dists), np.array(dissims))


def write_embedding_csv(embedding: LatentEmbedding, path) -> None:
    """Export the latent table: id,label,h0_0,...,h0_{H-1}."""
    h = embedding.vectors.shape[1]
    labels = embedding.labels or [""] * len(embedding.ids)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "label"] + [f"h0_{j}" for j in range(h)])
        for sid, label, row in zip(embedding.ids, labels, embedding.vectors):
            w.writerow([sid, label] + [repr(float(x)) for x in row])


def write_plot_csv(
    embedding: LatentEmbedding,
    path,
    dataset: Dataset | None = None,
    target_id: str | None = None,
) -> None:
    """2-D projection table: id,label,pc1,pc2,corr_to_target.

    The correlation column is populated only when a dataset and target id
    are given; otherwise it is left empty.
    """
    proj = pca(embedding, 2).projections
    corr: dict[str, float] = {}
    if target_id is not None:
        if dataset is None:
            raise ValueError("target_id given without a dataset to correlate against")
        corr = dict(correlation_map(dataset, target_id))
    labels = embedding.labels or [""] * len(embedding.ids)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "label", "pc1", "pc2", "corr_to_target"])
        for i, (sid, label) in enumerate(zip(embedding.ids, labels)):
            c = repr(corr[sid]) if sid in corr else ""
            w.writerow([sid, label, repr(float(proj[i, 0])), repr(float(proj[i, 1])), c])
