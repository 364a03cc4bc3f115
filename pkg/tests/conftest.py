import pathlib
import sys

SRC = pathlib.Path(__file__).resolve().parents[1] / "src"
if str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

import pytest

from smech.modelio import load_model

MODELS = SRC / "smech" / "models"
GOLDEN = pathlib.Path(__file__).resolve().parent / "golden"


def model_path(name: str) -> pathlib.Path:
    return MODELS / f"{name}.sm"


@pytest.fixture
def dirac_model():
    return load_model(model_path("dirac"))


@pytest.fixture
def n2_model():
    return load_model(model_path("n2"))


@pytest.fixture
def n2h_model():
    return load_model(model_path("n2_harmonic"))


@pytest.fixture
def constrained_model():
    return load_model(model_path("constrained"))


@pytest.fixture
def constrained_h_model():
    return load_model(model_path("constrained_harmonic"))


@pytest.fixture
def supersphere_model():
    return load_model(model_path("supersphere"))


@pytest.fixture
def rotation_model():
    return load_model(model_path("rotation"))
