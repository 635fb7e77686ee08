import pytest

from coopredict.io import bundled_structures
from coopredict.simulator import NoiseMode, SimulationConfig
from coopredict.synthetic import default_truth_model, generate_synthetic


@pytest.fixture(scope="session")
def structures():
    return bundled_structures()


@pytest.fixture(scope="session")
def truth():
    return default_truth_model()


@pytest.fixture(scope="session")
def small_decisions(structures, truth):
    """About 13k decisions with execution flips, as the generator normally writes them."""
    return generate_synthetic(truth, structures, 30, seed=101)


@pytest.fixture(scope="session")
def clean_decisions(structures, truth):
    """About 100k decisions without execution flips, so the truth model is exactly logistic."""
    return generate_synthetic(truth, structures, 233, seed=202, config=SimulationConfig(noise_mode=NoiseMode.NO_FLIP))
