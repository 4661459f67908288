import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dcekit.core import ModelSpec, default_attributes
from dcekit.design import full_factorial, optimize_design
from dcekit.synth import simulate_choices

RANDOM = ("origin", "processing", "harvesting", "certification", "heritage")

# baseline five-random-coefficient estimates, used as simulation truth
TRUTH_COL1 = dict(
    fixed={"asc_A": 1.361, "asc_B": 1.580, "price": -0.090},
    means={"origin": 0.965, "processing": 0.624, "harvesting": 0.938,
           "certification": 1.215, "heritage": 0.454},
    spreads={"origin": 1.028, "processing": 0.767, "harvesting": 1.069,
             "certification": 1.150, "heritage": 0.829},
)


@pytest.fixture(scope="session")
def attributes():
    return default_attributes()


@pytest.fixture(scope="session")
def plan(attributes):
    return optimize_design(full_factorial(attributes), attributes, seed=1)


@pytest.fixture(scope="session")
def mnl_data(plan):
    truth = dict(fixed={"asc_A": 0.5, "asc_B": 0.6, "price": -0.08, "origin": 0.9,
                        "processing": 0.6, "harvesting": 0.8, "certification": 1.1,
                        "heritage": 0.4})
    return simulate_choices(plan, truth, 2000, seed=7), truth


@pytest.fixture(scope="session")
def mnl_spec():
    return ModelSpec(fixed=("price",) + RANDOM)


@pytest.fixture(scope="session")
def small_data(plan):
    """120 respondents, two random coefficients."""
    truth = dict(fixed={"asc_A": 0.4, "asc_B": 0.5, "price": -0.09, "processing": 0.6,
                        "harvesting": 0.9, "certification": 1.2},
                 means={"origin": 0.9, "heritage": 0.5},
                 spreads={"origin": 1.0, "heritage": 0.8})
    return simulate_choices(plan, truth, 120, seed=11)


@pytest.fixture(scope="session")
def small_spec():
    return ModelSpec(random=("origin", "heritage"),
                     fixed=("price", "processing", "harvesting", "certification"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance lines, echoed once more at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
