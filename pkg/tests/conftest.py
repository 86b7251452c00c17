import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion tag")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        num, title = mark.args
        prev = _criteria.get(num, (title, "PASS"))
        state = prev[1] if rep.passed else "FAIL"
        _criteria[num] = (title, state)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        title, state = _criteria[num]
        terminalreporter.write_line(f"{state}  criterion {num:>2}: {title}")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(20240611)
