import numpy as np
import pytest

from persona_synth.ingest import MarginalTargets
from persona_synth.schema import (
    Attribute,
    AttributeSchema,
    Question,
    SurveyConfig,
    data_path,
    load_default_config,
)


@pytest.fixture(scope="session")
def default_config() -> SurveyConfig:
    return load_default_config()


@pytest.fixture(scope="session")
def benchmark_path():
    return data_path("benchmark_fixture.csv")


@pytest.fixture(scope="session")
def prior_path():
    return data_path("naive_prior.csv")


@pytest.fixture
def small_schema() -> AttributeSchema:
    return AttributeSchema(
        attributes=(
            Attribute("Age Group", ("young", "mid", "old")),
            Attribute("Income", ("low", "high")),
        )
    )


@pytest.fixture
def small_question() -> Question:
    return Question(
        id="walk",
        text="Walking works for my daily trips.",
        responses=("agree", "neutral", "disagree"),
        group_attribute="Age Group",
    )


def random_schema(rng: np.random.Generator, max_attrs: int = 4,
                  max_categories: int = 5) -> AttributeSchema:
    n_attrs = int(rng.integers(1, max_attrs + 1))
    attrs = []
    for k in range(n_attrs):
        size = int(rng.integers(1, max_categories + 1))
        attrs.append(Attribute(f"attr{k}", tuple(f"a{k}c{j}" for j in range(size))))
    return AttributeSchema(attributes=tuple(attrs))


def random_marginals(rng: np.random.Generator, schema: AttributeSchema) -> MarginalTargets:
    shares = {}
    for attr in schema.attributes:
        vec = rng.random(attr.size) + 0.05
        shares[attr.name] = vec / vec.sum()
    return MarginalTargets(schema=schema, shares=shares)
