import numpy as np
import pytest

from sweptvol.motion import capsule_example
from sweptvol.sweep import build_swept_rep

CRITERIA = {}


@pytest.fixture(scope="session")
def capsule():
    return capsule_example()


@pytest.fixture(scope="session")
def capsule_swept(capsule):
    base, motion = capsule
    return build_swept_rep(base, motion)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    for key, value in report.user_properties:
        if key == "criterion":
            n, title = value
            ok = report.passed
            CRITERIA[n] = (title, CRITERIA.get(n, (title, True))[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        title, ok = CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture(autouse=True)
def _criterion_property(request):
    marker = request.node.get_closest_marker("criterion")
    if marker is not None:
        request.node.user_properties.append(("criterion", tuple(marker.args)))
