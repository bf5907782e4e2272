import numpy as np
import pytest

from qiul.core import OpticalSetup, SourceParams

LAMBDA_P = 405e-9
LAMBDA_D = 730e-9
LAMBDA_U = 910e-9

CRYSTAL_LENGTHS = (2e-3, 5e-3, 10e-3)
PUMP_WAISTS = (50e-6, 142e-6, 214e-6, 308e-6)
PARAM_GRID = [(L, w) for L in CRYSTAL_LENGTHS for w in PUMP_WAISTS]


def make_params(crystal_length=2e-3, pump_waist=142e-6) -> SourceParams:
    return SourceParams(
        lambda_p=LAMBDA_P,
        lambda_d=LAMBDA_D,
        lambda_u=LAMBDA_U,
        crystal_length=crystal_length,
        pump_waist=pump_waist,
    )


@pytest.fixture
def params() -> SourceParams:
    return make_params()


@pytest.fixture
def setup() -> OpticalSetup:
    return OpticalSetup()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240915)
