import numpy as np
import pytest

from nlgmp.gaussian import GaussianMoments
from nlgmp.ssm import StateSpaceModel, VectorFunction


def random_pd(rng, n, scale=1.0):
    A = rng.standard_normal((n, n))
    return scale * (A @ A.T + 0.5 * np.eye(n))


def random_gaussian(rng, n):
    return GaussianMoments(rng.standard_normal(n), random_pd(rng, n))


def random_stable_linear_model(rng, n, p, with_input=False):
    A = rng.standard_normal((n, n))
    A *= 0.95 / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-9)
    H = rng.standard_normal((p, n))
    m = 1 if with_input else 0
    g = VectorFunction.linear(rng.standard_normal((n, m)), arg="u") if with_input else None
    return StateSpaceModel(
        state_dim=n,
        input_dim=m,
        obs_dim=p,
        f=VectorFunction.linear(A),
        g=g,
        h=VectorFunction.linear(H),
        Q=random_pd(rng, n, 0.3),
        R=random_pd(rng, p, 0.5),
        x0=random_gaussian(rng, n),
    )


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-300))


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


# One PASS/FAIL line per acceptance criterion, printed after the run.
_criterion_numbers: dict[str, int] = {}
_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number): acceptance criterion checked by the test")


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            _criterion_numbers[item.nodeid] = marker.args[0]


def pytest_runtest_logreport(report):
    number = _criterion_numbers.get(report.nodeid)
    if number is None or (report.when != "call" and report.passed):
        return
    _criteria[number] = ("PASS" if report.passed else "FAIL", report.nodeid.split("::")[-1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, name = _criteria[number]
        terminalreporter.write_line(f"criterion {number}: {status} ({name})")
