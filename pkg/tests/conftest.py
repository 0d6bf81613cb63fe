import numpy as np
import pytest

from skilllab.config import EvalConfig, LearnConfig, PolicyConfig, RunConfig, SamplerConfig
from skilllab.diffcore import reset_tape
from skilllab.generate import Dataset, run_expert_episode
from skilllab.world import SkillId, TaskSpec

TINY_POLICY = PolicyConfig(d_h=8, d_z=8, d_e=8, n_heads=2, token_dim=4, encoder_hidden=(8,),
                           expert_hidden=8, time_features=4, estimator_tokens=2, estimator_heads=2,
                           estimator_dim=4)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run trend-level acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: trend-level acceptance run (needs --runslow)")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


@pytest.fixture(autouse=True)
def fresh_tape():
    reset_tape()
    yield
    reset_tape()


@pytest.fixture
def tiny_cfg(tmp_path):
    learn = LearnConfig(batch_size=8, steps=3, log_every=1, selector_steps=20, selector_accuracy=0.0,
                        finetune_steps=2)
    return RunConfig(policy=TINY_POLICY, learn=learn, sampler=SamplerConfig(n_flow_steps=2),
                     eval=EvalConfig(n_trials=2, mi_bins=2, mi_samples=400, mi_shuffles=3,
                                     support_samples=50),
                     out_dir=str(tmp_path))


@pytest.fixture(scope="session")
def short_demos():
    """Short expert episodes of one single-arm pairing and one dual skill."""
    demos = []
    for task in (TaskSpec.pair(SkillId.L1, SkillId.IDLE, horizon=12),
                 TaskSpec.pair(SkillId.IDLE, SkillId.R1, horizon=12),
                 TaskSpec.dual(SkillId.D1, horizon=12)):
        demos += [run_expert_episode(task, seed) for seed in (0, 1)]
    return demos


@pytest.fixture(scope="session")
def short_dataset(short_demos):
    return Dataset.from_demos(short_demos)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
