import numpy as np
import pytest
from hypothesis import settings, strategies as st

from gwgames.casestudies import BinaryParams, PoissonParams, binary_to_spec, poisson_to_spec
from gwgames.model import (
    ModelSpec, TableLaw, childless_spec, monochrome_sets, random_poisson_spec, random_table_spec,
)

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def table_spec(seed: int, **kw) -> ModelSpec:
    return random_table_spec(np.random.default_rng(seed), **kw)


def poisson_spec(seed: int, **kw) -> ModelSpec:
    return random_poisson_spec(np.random.default_rng(seed), **kw)


def binary(**kw) -> ModelSpec:
    return binary_to_spec(BinaryParams(**kw))


def chain_spec() -> ModelSpec:
    """Blue vertices surely have exactly one blue child; red ones have none."""
    blue = TableLaw.point_mass([1, 0])
    red = TableLaw.point_mass([0, 0])
    return ModelSpec(np.array([1.0, 0.0]), (blue, red), monochrome_sets(2))


@pytest.fixture
def childless():
    return childless_spec(2)


@pytest.fixture
def all_mixed():
    return binary(pbr=1, qbr=1)


@pytest.fixture
def poisson_small():
    return poisson_to_spec(PoissonParams(2.0, 0.5, 0.5))
