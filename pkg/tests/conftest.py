import numpy as np
import pytest

from hdm.fv import build_fv_hd
from hdm.gr import build_gr_hd
from hdm.mesh import gen_diagonal_triangulation, gen_square_grid
from hdm.problems import manufactured_problem

#: Lines printed by the acceptance tests, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(params=["ex1", "ex2", "ex3"])
def problem_id(request):
    return request.param


@pytest.fixture
def exact(problem_id):
    return manufactured_problem(problem_id).exact


@pytest.fixture(scope="session")
def square8():
    return gen_square_grid(8)


@pytest.fixture(scope="session")
def diag8():
    return gen_diagonal_triangulation(8, "centroid")


@pytest.fixture(scope="session")
def fv8(square8):
    return build_fv_hd(square8)


@pytest.fixture(scope="session")
def gr8(diag8):
    return build_gr_hd(diag8)


@pytest.fixture(scope="session", params=["relocate", "elementwise"])
def gr8_strategy(request, diag8):
    return build_gr_hd(diag8, strategy=request.param)
