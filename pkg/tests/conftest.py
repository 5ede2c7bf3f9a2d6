import pytest

from posegwr.avatars import generate_exercise, make_avatar
from posegwr.config import RunConfig
from posegwr.experiments import PERTURBATION_ORDER, ensure_dataset
from posegwr.model import train_model
from posegwr.snapshot import load, save


@pytest.fixture(scope="session")
def run_config():
    return RunConfig()


@pytest.fixture(scope="session")
def base_avatar(run_config):
    return make_avatar(run_config.avatar_seeds[0])


@pytest.fixture(scope="session")
def squat_seq(base_avatar):
    seq, _ = generate_exercise(base_avatar, "correct", frames=100)
    return seq


@pytest.fixture(scope="session")
def gamma_model(squat_seq, run_config):
    model, _ = train_model(squat_seq, run_config, variant="gamma")
    return model


@pytest.fixture(scope="session")
def episodic_model(squat_seq, run_config):
    model, _ = train_model(squat_seq, run_config, variant="episodic")
    return model


@pytest.fixture(scope="session")
def subnode_model(squat_seq, run_config):
    model, _ = train_model(squat_seq, run_config, variant="subnode")
    return model


@pytest.fixture(scope="session")
def dataset_dir(tmp_path_factory, run_config):
    d = tmp_path_factory.mktemp("dataset")
    ensure_dataset(d, run_config, perturbations=tuple(PERTURBATION_ORDER))
    return d


def clone(model):
    """Deep copy a model through its snapshot; mutation-safe for shared fixtures."""
    return load(save(model))
