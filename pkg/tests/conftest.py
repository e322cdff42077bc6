from __future__ import annotations

import numpy as np
import pytest

from regrow.core import EmbeddingVector, SiteRecord, Strategy
from regrow.references import ReferenceYearPolicy, build_reference_set, classify_points
from regrow.synthetic import SynthConfig, generate_world


def vec(*values) -> EmbeddingVector:
    return EmbeddingVector(np.array(values, dtype=float))


def basis(dim: int, axis: int, scale: float = 1.0) -> EmbeddingVector:
    v = np.zeros(dim)
    v[axis] = scale
    return EmbeddingVector(v)


def make_site(site_id="s1", start_year=2020, embeddings=None, **kwargs) -> SiteRecord:
    defaults = dict(
        centroid_lon=-47.0,
        centroid_lat=-22.0,
        area_ha=2.0,
        strategy=Strategy.FULL_AREA_PLANTING,
    )
    defaults.update(kwargs)
    return SiteRecord(
        site_id=site_id,
        start_year=start_year,
        embeddings=embeddings or {},
        **defaults,
    )


@pytest.fixture(scope="session")
def small_world():
    config = SynthConfig(
        seed=42, n_sites=24, points_per_class=30, points_per_transition=6
    )
    return generate_world(config)


@pytest.fixture(scope="session")
def small_refs(small_world):
    dataset, _ = small_world
    return classify_points(list(dataset.references))


@pytest.fixture(scope="session")
def small_refset(small_refs):
    return build_reference_set(small_refs, ReferenceYearPolicy.fixed(2024))
