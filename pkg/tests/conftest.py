from pathlib import Path

import pytest

HERE = Path(__file__).parent
FIXTURES = HERE / "fixtures"
DATA = HERE / "data"


@pytest.fixture
def fixture_dir():
    return FIXTURES


@pytest.fixture
def write_csv(tmp_path):
    def _write(name, text):
        p = tmp_path / name
        p.write_text(text, encoding="utf-8")
        return p

    return _write


# one PASS/FAIL line per acceptance criterion, printed after the run
_criteria = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, label = mark.args
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        if call.excinfo is None:
            outcome = "PASS"
        elif call.excinfo.errisinstance(pytest.skip.Exception):
            outcome = "SKIP"
        else:
            outcome = "FAIL"
        prev = _criteria.get(num, (label, "PASS"))[1]
        if prev == "FAIL" or (prev == "SKIP" and outcome == "PASS"):
            outcome = prev
        _criteria[num] = (label, outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        label, outcome = _criteria[num]
        terminalreporter.write_line(f"criterion {num:2d} {outcome}: {label}")
