import pytest

from etgoa.experiments.harness import load_policies, train_policies
from etgoa.gridworld import EnvConfig
from etgoa.policy import TrainingConfig


@pytest.fixture(scope="session")
def policy_dir(request):
    """Goal policies for the default grid, trained once and cached between runs."""
    directory = request.config.cache.mkdir("etgoa-policies")
    train_policies(directory, EnvConfig(), TrainingConfig(), seed=0)
    return directory


@pytest.fixture(scope="session")
def policies(policy_dir):
    return load_policies(policy_dir, EnvConfig())
