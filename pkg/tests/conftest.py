import pytest

from policyforest import (
    ContinuousParamSpec,
    DiscreteParamSpec,
    LabelSpec,
    ParameterSchema,
    default_schema,
    default_world,
    generate_corpus,
    label_dataset,
)


@pytest.fixture(scope="session")
def schema():
    return default_schema()


@pytest.fixture(scope="session")
def small_schema():
    """Four-parameter schema small enough to reason about by hand."""
    return ParameterSchema(
        continuous=(
            ContinuousParamSpec("alpha", 0.0, 1.0),
            ContinuousParamSpec("beta", -2.0, 3.0),
        ),
        discrete=(
            DiscreteParamSpec("Policies", ("No-policy", "Purchase"), role="policy"),
            DiscreteParamSpec("Region", ("North", "South"), role="region"),
        ),
    )


@pytest.fixture(scope="session")
def toy_corpus(schema):
    world = default_world(schema, noise_sigma=0.01, seed=101)
    return generate_corpus(world, schema, 4000, seed=101)


@pytest.fixture(scope="session")
def toy_labeled(schema, toy_corpus):
    return label_dataset(toy_corpus, schema, LabelSpec())
