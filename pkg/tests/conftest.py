import pytest
from loguru import logger

from depthguard.data import synth_generate
from depthguard.defense import Stores, TrainConfig, default_saliency_spec
from depthguard.networks import NetworkSpec, build_network

SMALL_DIMS = (16, 16)


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the long training reproductions")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def depth_spec():
    return NetworkSpec(role="depth", input_dims=(3, *SMALL_DIMS), widths=(4, 8), encoder_depth=2)


@pytest.fixture(scope="session")
def saliency_spec(depth_spec):
    return default_saliency_spec(depth_spec)


@pytest.fixture(scope="session")
def small_dataset():
    logger.debug("Generating the small synthetic dataset")
    return synth_generate(seed=5, n=6, dims=SMALL_DIMS)


@pytest.fixture(scope="session")
def stores(depth_spec, saliency_spec):
    return Stores(
        n=build_network(depth_spec, seed=0, role="N"),
        n_adv=build_network(depth_spec, seed=3, role="N_adv"),
        g=build_network(saliency_spec, seed=1, role="G"),
        g_adv=build_network(saliency_spec, seed=2, role="G_adv"),
    )


@pytest.fixture
def quick_train_cfg():
    return TrainConfig(epochs=2, iters_per_epoch=3)
