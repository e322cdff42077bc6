"""Deterministic 2D projection of embeddings plus a separability score.

Principal-component projection is the required method: unlike
neighborhood-embedding approaches it is deterministic and testable, and
it serves the same purpose here (plot-ready cluster inspection tables).
The sign convention forces each component's largest-magnitude entry
positive so repeated fits are identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import EmbeddingVector, ReferencePoint, SiteRecord
from .errors import DegenerateDataError, SingleClusterError, WrongDimensionError, ZeroVectorError


@dataclass(frozen=True)
class ProjectionModel:
    """Mean vector plus two orthonormal principal directions."""

    mean: EmbeddingVector
    components: tuple[EmbeddingVector, EmbeddingVector]
    explained_variance: tuple[float, float]


def fit_projection(embeddings: Sequence[EmbeddingVector]) -> ProjectionModel:
    """Fit the top-2 principal directions of the centered data.

    Requires at least 3 vectors that are not all identical, else
    DegenerateDataError.
    """
    if len(embeddings) < 3:
        raise DegenerateDataError(f"need at least 3 vectors, got {len(embeddings)}")
    X = np.stack([e.values for e in embeddings])
    mean = X.mean(axis=0)
    centered = X - mean
    scale = float(np.abs(X).max())
    if float(np.abs(centered).max()) <= 1e-12 * max(scale, 1.0):
        raise DegenerateDataError("all points identical")

    # SVD of the centered matrix: right singular vectors are the principal
    # directions, singular values give the explained variance.
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    components = []
    for i in range(2):
        c = vt[i]
        anchor = int(np.argmax(np.abs(c)))
        if c[anchor] < 0:
            c = -c
        components.append(EmbeddingVector(c))
    n = X.shape[0]
    variance = (svals[:2] ** 2) / (n - 1)
    return ProjectionModel(
        mean=EmbeddingVector(mean),
        components=(components[0], components[1]),
        explained_variance=(float(variance[0]), float(variance[1])),
    )


def project(model: ProjectionModel, e: EmbeddingVector) -> tuple[float, float]:
    """Project one embedding onto the two principal directions."""
    if e.dim != model.mean.dim:
        raise WrongDimensionError(f"dimension mismatch: {e.dim} vs {model.mean.dim}")
    centered = e.values - model.mean.values
    return (
        float(np.dot(centered, model.components[0].values)),
        float(np.dot(centered, model.components[1].values)),
    )


def trajectory_paths_2d(
    records: Sequence[ReferencePoint | SiteRecord], model: ProjectionModel
) -> list[tuple[str, int, float, float]]:
    """Per-year projected coordinates, sorted by (id, year)."""
    rows = []
    for rec in records:
        rec_id = rec.point_id if isinstance(rec, ReferencePoint) else rec.site_id
        for year, emb in rec.embeddings.items():
            x, y = project(model, emb)
            rows.append((rec_id, year, x, y))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


def silhouette_score(
    embeddings: Sequence[EmbeddingVector], labels: Sequence[str]
) -> float:
    """Mean silhouette over all points with cosine distance.

    Quantifies how cleanly the labels separate in embedding space. Points
    in singleton clusters contribute 0. Raises SingleClusterError for
    fewer than two distinct labels.
    """
    if len(embeddings) != len(labels):
        raise WrongDimensionError("embeddings and labels must have equal length")
    if len(set(labels)) < 2:
        raise SingleClusterError("silhouette requires at least 2 distinct labels")
    X = np.stack([e.values for e in embeddings])
    norms = np.linalg.norm(X, axis=1)
    if np.any(norms == 0.0):
        raise ZeroVectorError("cosine distance undefined for a zero vector")
    unit = X / norms[:, None]
    dist = np.clip(1.0 - unit @ unit.T, 0.0, 2.0)

    labels_arr = np.asarray(labels)
    unique = sorted(set(labels))
    masks = {lab: labels_arr == lab for lab in unique}
    scores = np.zeros(len(labels))
    for i in range(len(labels)):
        own = masks[labels_arr[i]]
        n_own = int(own.sum())
        if n_own <= 1:
            continue  # singleton: silhouette 0
        a = dist[i, own].sum() / (n_own - 1)
        b = min(
            float(dist[i, masks[lab]].mean())
            for lab in unique
            if lab != labels_arr[i]
        )
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())
