import pytest

from cdc_crossbar.engine import ChipState
from cdc_crossbar.fixtures import load_icd11_mini
from cdc_crossbar.materializer import compile_topology

_criteria: dict[int, dict] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            number, title = mark.args
            _criteria.setdefault(number, {"title": title, "outcomes": []})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[mark.args[0]]["outcomes"].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        outcomes = entry["outcomes"]
        if not outcomes:
            status = "NOT RUN"
        elif all(o == "passed" for o in outcomes):
            status = "PASS"
        elif any(o == "failed" for o in outcomes):
            status = "FAIL"
        else:
            status = "SKIP"
        terminalreporter.write_line(f"criterion {number:2d} {status:7s} {entry['title']}")


@pytest.fixture(scope="session")
def mini_da():
    return load_icd11_mini()


@pytest.fixture(scope="session")
def mini_ct(mini_da):
    return compile_topology(mini_da)


@pytest.fixture
def mini_state(mini_ct):
    return ChipState.program(mini_ct, seed=0)
