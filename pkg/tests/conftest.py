import sys
from pathlib import Path

import pytest
from hypothesis import settings

from wied import InitialDatum, ProblemSpec, make_grid, minimize

sys.path.insert(0, str(Path(__file__).parent / "oracles"))

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def bump_problem(gamma=1.0, eps=0.1, **kw):
    datum = InitialDatum("bump", center=(0.0,), radius=0.5, height=0.5)
    return ProblemSpec(gamma=gamma, epsilon=eps, bc="dirichlet", initial=datum, **kw)


def stationary_problem(gamma=1.0, eps=0.1):
    return ProblemSpec(gamma=gamma, epsilon=eps, bc="dirichlet", initial=InitialDatum("alt_phillips"))


@pytest.fixture(scope="session")
def bump_run():
    """Converged gamma = 1 bump run on a 65 x 129 grid."""
    prob = bump_problem()
    grid = make_grid(1, [-1, 1], 64, 1.0, 128)
    u, rep = minimize(prob, grid)
    return prob, u, rep


@pytest.fixture(scope="session")
def bump_run_15():
    prob = bump_problem(gamma=1.5)
    grid = make_grid(1, [-1, 1], 64, 1.0, 128)
    u, rep = minimize(prob, grid)
    return prob, u, rep


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one verdict line per acceptance criterion for the terminal summary."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: s.split("#", 1)[1]):
            terminalreporter.write_line(line)
