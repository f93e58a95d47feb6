import pathlib
import typing

import numpy as np
import pytest

from cas_optim.data_types import MimoScenario
from cas_optim.data_types import ScalarScenario

TEST_PACKAGE_FOLDER = pathlib.Path(__file__).parent
EXPERIMENTS_FOLDER = TEST_PACKAGE_FOLDER.parent / "experiments"


@pytest.fixture
def experiments_folder() -> pathlib.Path:
    return EXPERIMENTS_FOLDER


@pytest.fixture
def reference_scenario() -> ScalarScenario:
    # SNR_s = SNR_c = 0 dB, unit state variance, B = 5
    return ScalarScenario()


@pytest.fixture
def coarse_scenario() -> ScalarScenario:
    return ScalarScenario(x_points=41, s_points=61, z_points=81, y_points=81)


@pytest.fixture
def make_mimo_scenario() -> typing.Callable[..., MimoScenario]:
    def _make(
        channel=None,
        state=None,
        sensing_noise_variance: float = 1.0,
        comm_noise_variance: float = 1.0,
        power_budget: float = 5.0,
        sensing_antennas: int = 2,
    ) -> MimoScenario:
        if state is None:
            state = np.diag([0.4, 0.1])
        state = np.asarray(state)
        if channel is None:
            channel = np.eye(state.shape[0])
        return MimoScenario(
            channel=np.asarray(channel, dtype=complex),
            state_covariance=state,
            sensing_noise_variance=sensing_noise_variance,
            comm_noise_variance=comm_noise_variance,
            power_budget=power_budget,
            sensing_antennas=sensing_antennas,
        )

    return _make


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)
