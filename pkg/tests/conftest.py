import numpy as np
import pytest

from blocksketch import rng

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    marker = dict(report.user_properties).get("criterion")
    if marker is not None:
        _ACCEPTANCE[marker] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        outcome = _ACCEPTANCE[number]
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}")


@pytest.fixture
def gen(request):
    """Per-test generator keyed on the test name."""
    return rng.stream(0, request.node.name)


def hadamard_oracle(n):
    """Dense normalized Sylvester Hadamard matrix by repeated Kronecker products."""
    H = np.array([[1.0]])
    h2 = np.array([[1.0, 1.0], [1.0, -1.0]])
    while H.shape[0] < n:
        H = np.kron(H, h2)
    return H / np.sqrt(n)
