import numpy as np
import pytest

from condfield.autodiff import Tensor

# criterion number -> one-line verdict, printed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def leaf(rng, *shape, scale=1.0):
    """Float64 leaf tensor with gradient tracking."""
    return Tensor(scale * rng.standard_normal(shape), requires_grad=True)


def _line(number: int, ok: bool, detail: str) -> str:
    return f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


@pytest.fixture
def criterion(request):
    """``criterion(ok, detail)`` records the verdict for the test's criterion marker and asserts it."""
    number = request.node.get_closest_marker("criterion").args[0]

    def record(ok: bool, detail: str) -> None:
        ACCEPTANCE[number] = _line(number, bool(ok), detail)
        print(ACCEPTANCE[number])
        assert ok, detail
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker and report.when == "call" and report.failed and marker.args[0] not in ACCEPTANCE:
        ACCEPTANCE[marker.args[0]] = _line(marker.args[0], False, f"error: {call.excinfo.typename}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
