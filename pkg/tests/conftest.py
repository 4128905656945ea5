import numpy as np
import pytest
from hypothesis import settings

from hjdirichlet import BoundaryData, Problem, kinetic, mechanical
from hjdirichlet.geometry import Disk, make_domain
from hjdirichlet.lagrangian import ScalarField

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

LSHAPE = [[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0], [1.0, 2.0], [0.0, 2.0]]
SQ2 = np.sqrt(2.0)


@pytest.fixture(scope="session")
def disk():
    return Disk()


@pytest.fixture(scope="session")
def square():
    return make_domain("square", half_width=1.0)


@pytest.fixture(scope="session")
def lshape():
    return make_domain("polygon", vertices=LSHAPE)


@pytest.fixture(scope="session")
def disk_problem(disk):
    return Problem(kinetic(), disk, BoundaryData.const(0.0))


@pytest.fixture(scope="session")
def square_problem(square):
    return Problem(kinetic(), square, BoundaryData.const(0.0))


@pytest.fixture(scope="session")
def square_mechanical(square):
    spec = mechanical(np.eye(2), None, ScalarField.polynomial(-1.0))
    return Problem(spec, square, BoundaryData.const(0.0))


@pytest.fixture(scope="session")
def disk_mechanical(disk):
    spec = mechanical(np.eye(2), None, ScalarField.polynomial(-1.0))
    return Problem(spec, disk, BoundaryData.const(0.0))


# -- acceptance report -------------------------------------------------------------------
ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion; returns ``passed``."""

    def record(num: int, title: str, passed: bool, detail: str) -> bool:
        line = f"[{'PASS' if passed else 'FAIL'}] {num:2d}/13 {title}: {detail}"
        ACCEPTANCE.append((num, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
