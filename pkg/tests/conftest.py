import pytest

from neuroguide import data
from neuroguide.pipeline import PipelineConfig
from neuroguide.sim import AgentProfile, train_fixture_models


@pytest.fixture(scope="session")
def pipe_cfg():
    return PipelineConfig()


@pytest.fixture(scope="session")
def models(pipe_cfg):
    return train_fixture_models(pipe_cfg)


@pytest.fixture(scope="session")
def full_checklist():
    return data.load_fixture_checklist("uh60_preflight")


@pytest.fixture(scope="session")
def smoke_checklist():
    return data.load_fixture_checklist("uh60_smoke")


@pytest.fixture
def fast_agent():
    return AgentProfile(base_error_prob=0.0, latency_mean_s=1.5, latency_sigma=0.3)


@pytest.fixture
def slow_agent():
    return AgentProfile(base_error_prob=0.05, latency_mean_s=12.0, latency_sigma=0.25)
