import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import uctmc
import uctmc.io as uio


@pytest.fixture(scope="session")
def sir2():
    return uctmc.load_model(uctmc.example_model_path("sir2"))


@pytest.fixture(scope="session")
def sir20():
    return uctmc.load_model(uctmc.example_model_path("sir20"))


@pytest.fixture(scope="session")
def sir140():
    return uctmc.load_model(uctmc.example_model_path("sir140"))


@pytest.fixture(scope="session")
def tandem():
    return uctmc.load_model(uctmc.example_model_path("tandem"))


@pytest.fixture(scope="session")
def sir_measures():
    return uio.read_measures(uctmc.example_model_path("sir_horizons"))


@pytest.fixture(scope="session")
def mean_valuation():
    return uctmc.Valuation.from_floats([0.05, 0.04])
