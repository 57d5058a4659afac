import os

import pytest

import acamsim as A

FIXTURES = os.path.join(os.path.dirname(__file__), "fixtures")


@pytest.fixture(scope="session")
def tech():
    return A.load_tech()


@pytest.fixture(scope="session")
def iris_dir():
    return os.path.join(FIXTURES, "iris")


@pytest.fixture(scope="session")
def digits_dir():
    return os.path.join(FIXTURES, "digits")


@pytest.fixture(scope="session")
def salm_luts(tech):
    return A.gen_synthetic_luts(tech, "salm")


@pytest.fixture(scope="session")
def luts_6t2m(tech):
    return A.gen_synthetic_luts(tech, "6t2m")


@pytest.fixture(scope="session")
def ideal_luts(tech):
    return A.gen_synthetic_luts(tech, "ideal")
