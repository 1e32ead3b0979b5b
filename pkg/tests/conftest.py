"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

from collections import OrderedDict

import pytest

_OUTCOMES = OrderedDict()


@pytest.fixture
def detail(request):
    """Attach a measured value to the criterion's summary line."""
    mark = request.node.get_closest_marker("acceptance")

    def add(text):
        _OUTCOMES[mark.args[0]]["details"].append(f"{request.node.name}: {text}")

    return add


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            _OUTCOMES.setdefault(mark.args[0], {"title": mark.args[1], "results": [], "details": []})


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _OUTCOMES[mark.args[0]]["results"].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        entry = _OUTCOMES[number]
        results = entry["results"]
        if not results or all(r == "skipped" for r in results):
            status = "NOT RUN"
        elif all(r == "passed" for r in results):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {entry['title']}")
        for line in entry["details"]:
            terminalreporter.write_line(f"    {line}")
