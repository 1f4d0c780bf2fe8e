import json
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from flexagg.grid_model import Branch, Bus, GridCase, NodeFlexibility, read_grid_case
from flexagg.powerflow import solve_newton_raphson
from flexagg.sensitivity import compute_sensitivities

DATA = Path(str(resources.files("flexagg") / "data"))
ORACLES = Path(__file__).resolve().parent / "data"


def data_path(name):
    return DATA / name


def two_bus(z=0.1j, p1=0.0, q1=0.0, shunt=0j, flex=()):
    return GridCase(1.0, (Bus(0, "slack"), Bus(1, "load", p1, q1)), (Branch(0, 1, z, shunt, 10.0),),
                    (0,), tuple(flex))


@pytest.fixture(scope="session")
def case5():
    return read_grid_case(data_path("case5.json"))


@pytest.fixture(scope="session")
def case34():
    return read_grid_case(data_path("case34.json"))


@pytest.fixture(scope="session")
def sol5(case5):
    return solve_newton_raphson(case5, tolerance=1e-12)


@pytest.fixture(scope="session")
def sol34(case34):
    return solve_newton_raphson(case34, tolerance=1e-12)


@pytest.fixture(scope="session")
def bundle5(case5, sol5):
    return compute_sensitivities(sol5, case5)


@pytest.fixture(scope="session")
def bundle34(case34, sol34):
    return compute_sensitivities(sol34, case34)


@pytest.fixture(scope="session")
def oracle5():
    return json.loads((ORACLES / "case5_oracle.json").read_text())
