"""Reference engine: stability classification, reference embeddings, outliers.

Builds the global secondary-forest reference vector (mean embedding of all
stable secondary-forest points), per-class centroids, nearest-reference
lookup for local similarity, and centroid-distance outlier ranking.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np

from .core import (
    EmbeddingVector,
    LULCClass,
    ReferencePoint,
    SECONDARY_FOREST,
    SiteRecord,
    Stability,
    StabilityKind,
    cosine_similarity,
)
from .errors import (
    InsufficientSeriesError,
    InvalidValueError,
    NoCentroidForClassError,
    NoSecondaryForestPointsError,
)
from .geo import haversine_km_many

log = logging.getLogger("regrow.references")

OutlierMetric = Literal["cosine", "euclidean"]


def classify_stability(
    series: Mapping[int, LULCClass],
    min_stable_years: int = 10,
    end_year: int = 2024,
    change_from: tuple[int, int] = (2017, 2020),
    change_to: tuple[int, int] = (2021, 2024),
) -> Stability:
    """Classify an annual label series as Stable, Changing, or Neither.

    Stable(c): the last ``min_stable_years`` consecutive years ending at
    ``end_year`` all carry class c. Changing(a, b): every year of the
    ``change_from`` window carries a, every year of ``change_to`` carries
    b, and a != b. Stable takes precedence. The series must cover the
    stable window and both change windows, else InsufficientSeriesError.
    """
    stable_first = end_year - min_stable_years + 1
    missing = [
        y
        for y in range(min(stable_first, change_from[0]), end_year + 1)
        if y not in series
        and (stable_first <= y <= end_year
             or change_from[0] <= y <= change_from[1]
             or change_to[0] <= y <= change_to[1])
    ]
    if missing:
        raise InsufficientSeriesError(f"series missing required years {missing}")

    tail = series[stable_first]
    if all(series[y] == tail for y in range(stable_first + 1, end_year + 1)):
        return Stability.stable(tail)

    from_cls = series[change_from[0]]
    to_cls = series[change_to[0]]
    if (
        all(series[y] == from_cls for y in range(change_from[0], change_from[1] + 1))
        and all(series[y] == to_cls for y in range(change_to[0], change_to[1] + 1))
        and from_cls != to_cls
    ):
        return Stability.changing(from_cls, to_cls)
    return Stability.neither()


def classify_points(points: Sequence[ReferencePoint], **kwargs) -> list[ReferencePoint]:
    """Return points (sorted by id) with their stability fields filled in."""
    return [
        p.with_stability(classify_stability(p.lulc_series, **kwargs))
        for p in sorted(points, key=lambda p: p.point_id)
    ]


@dataclass(frozen=True)
class ReferenceYearPolicy:
    """Which year's embeddings form the reference vectors.

    ``fixed``: the single configured year for every trajectory year.
    ``per_year``: references recomputed from that year's embeddings for
    each trajectory year; ``year`` then acts as the anchor used for the
    headline fields (and baselines).
    """

    kind: Literal["fixed", "per_year"]
    year: int

    @classmethod
    def fixed(cls, year: int = 2024) -> "ReferenceYearPolicy":
        return cls("fixed", year)

    @classmethod
    def per_year(cls, anchor_year: int = 2024) -> "ReferenceYearPolicy":
        return cls("per_year", anchor_year)


@dataclass(frozen=True)
class SecondaryPoint:
    point_id: str
    lon: float
    lat: float
    embedding: EmbeddingVector


@dataclass(frozen=True)
class ReferenceSet:
    """Global reference vector, class centroids, and the secondary points.

    ``global_ref`` and ``centroids`` are computed at the policy year (the
    anchor year under the per-year policy); the per-year tables back the
    per-year lookups.
    """

    policy: ReferenceYearPolicy
    global_ref: EmbeddingVector
    centroids: Mapping[LULCClass, EmbeddingVector]
    secondary_points: tuple[SecondaryPoint, ...]
    global_by_year: Mapping[int, EmbeddingVector] = field(default_factory=dict)
    centroids_by_year: Mapping[int, Mapping[LULCClass, EmbeddingVector]] = field(
        default_factory=dict
    )
    secondary_by_year: Mapping[str, Mapping[int, EmbeddingVector]] = field(
        default_factory=dict
    )

    def global_reference(self, year: int | None = None) -> EmbeddingVector:
        if self.policy.kind == "fixed" or year is None:
            return self.global_ref
        ref = self.global_by_year.get(year)
        if ref is None:
            raise NoSecondaryForestPointsError(
                f"no stable secondary-forest embeddings for year {year}"
            )
        return ref

    def class_centroids(self, year: int | None = None) -> Mapping[LULCClass, EmbeddingVector]:
        if self.policy.kind == "fixed" or year is None:
            return self.centroids
        return self.centroids_by_year.get(year, {})

    def secondary_embedding(self, point_id: str, year: int | None = None) -> EmbeddingVector:
        if self.policy.kind == "fixed" or year is None:
            for p in self.secondary_points:
                if p.point_id == point_id:
                    return p.embedding
            raise NoSecondaryForestPointsError(f"unknown secondary point {point_id!r}")
        by_year = self.secondary_by_year.get(point_id, {})
        emb = by_year.get(year)
        if emb is None:
            raise NoSecondaryForestPointsError(
                f"secondary point {point_id!r} has no embedding for year {year}"
            )
        return emb


@dataclass(frozen=True)
class OutlierReport:
    """Ranked centroid-distance outliers for one class (descending distance)."""

    lulc: LULCClass
    metric: str
    ranked: tuple[tuple[str, float], ...]

    def __post_init__(self):
        distances = [d for _, d in self.ranked]
        if any(b > a for a, b in zip(distances, distances[1:])):
            raise InvalidValueError("outlier distances must be non-increasing")


def _mean_embedding(members: Sequence[tuple[str, EmbeddingVector]]) -> EmbeddingVector:
    # Fixed summation order (sorted point_id) for bit-reproducibility.
    ordered = sorted(members, key=lambda m: m[0])
    stack = np.stack([m[1].values for m in ordered])
    return EmbeddingVector(stack.mean(axis=0))


def _stable_members_by_class(
    points: Sequence[ReferencePoint], year: int
) -> dict[LULCClass, list[tuple[str, ReferencePoint]]]:
    out: dict[LULCClass, list[tuple[str, ReferencePoint]]] = {}
    for p in points:
        if p.stability.kind is StabilityKind.STABLE and year in p.embeddings:
            out.setdefault(p.stability.stable_class, []).append((p.point_id, p))
    return out


def build_reference_set(
    points: Sequence[ReferencePoint],
    policy: ReferenceYearPolicy | None = None,
) -> ReferenceSet:
    """Build the reference set from stability-classified points.

    The global reference is the componentwise mean embedding of the stable
    secondary-forest members at the policy year; class centroids are built
    the same way for every stable class with at least one member.
    """
    policy = policy or ReferenceYearPolicy.fixed()
    anchor = policy.year

    def build_for_year(year: int):
        members = _stable_members_by_class(points, year)
        centroids = {
            cls: _mean_embedding([(pid, p.embeddings[year]) for pid, p in pts])
            for cls, pts in members.items()
        }
        secondary = tuple(
            SecondaryPoint(pid, p.lon, p.lat, p.embeddings[year])
            for pid, p in sorted(members.get(SECONDARY_FOREST, []))
        )
        return centroids, secondary

    anchor_centroids, anchor_secondary = build_for_year(anchor)
    if SECONDARY_FOREST not in anchor_centroids:
        raise NoSecondaryForestPointsError(
            f"no stable secondary-forest point with an embedding for year {anchor}"
        )

    global_by_year: dict[int, EmbeddingVector] = {}
    centroids_by_year: dict[int, Mapping[LULCClass, EmbeddingVector]] = {}
    secondary_by_year: dict[str, dict[int, EmbeddingVector]] = {}
    if policy.kind == "per_year":
        all_years = sorted({y for p in points for y in p.embeddings})
        for year in all_years:
            centroids, secondary = build_for_year(year)
            if SECONDARY_FOREST in centroids:
                global_by_year[year] = centroids[SECONDARY_FOREST]
                centroids_by_year[year] = centroids
            for sp in secondary:
                secondary_by_year.setdefault(sp.point_id, {})[year] = sp.embedding

    return ReferenceSet(
        policy=policy,
        global_ref=anchor_centroids[SECONDARY_FOREST],
        centroids=anchor_centroids,
        secondary_points=anchor_secondary,
        global_by_year=global_by_year,
        centroids_by_year=centroids_by_year,
        secondary_by_year=secondary_by_year,
    )


def find_local_reference(site: SiteRecord, refset: ReferenceSet) -> tuple[str, float]:
    """Nearest stable secondary-forest point by great-circle distance.

    Ties are broken by lexicographically smallest point_id.
    """
    pts = refset.secondary_points
    if not pts:
        raise NoSecondaryForestPointsError("reference set has no secondary points")
    lons = np.array([p.lon for p in pts])
    lats = np.array([p.lat for p in pts])
    dists = haversine_km_many(site.centroid_lon, site.centroid_lat, lons, lats)
    best = min(range(len(pts)), key=lambda i: (dists[i], pts[i].point_id))
    return pts[best].point_id, float(dists[best])


def detect_outliers(
    points: Sequence[ReferencePoint],
    lulc: LULCClass,
    refset: ReferenceSet,
    top_k: int = 10,
    metric: OutlierMetric = "cosine",
) -> OutlierReport:
    """Rank stable members of ``lulc`` by distance from the class centroid.

    Cosine distance (1 - cosine similarity) by default, matching the
    similarity geometry used elsewhere; Euclidean by flag. Returns the
    min(top_k, n) farthest members, distances non-increasing.
    """
    centroid = refset.centroids.get(lulc)
    if centroid is None:
        raise NoCentroidForClassError(f"no centroid for class {lulc.label}")
    year = refset.policy.year
    members = _stable_members_by_class(points, year).get(lulc, [])
    scored: list[tuple[str, float]] = []
    for pid, p in members:
        emb = p.embeddings[year]
        if metric == "cosine":
            dist = 1.0 - cosine_similarity(emb, centroid)
        elif metric == "euclidean":
            dist = float(np.linalg.norm(emb.values - centroid.values))
        else:
            raise InvalidValueError(f"unknown outlier metric {metric!r}")
        scored.append((pid, dist))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return OutlierReport(lulc=lulc, metric=metric, ranked=tuple(scored[: max(top_k, 0)]))
