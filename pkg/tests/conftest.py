"""Per-criterion PASS/FAIL summary for the acceptance suite."""

from collections import defaultdict

import pytest

_results = defaultdict(list)
_titles = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    _titles[number] = title
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _results[number].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _titles:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_titles):
        outcomes = _results[number]
        if "failed" in outcomes:
            status = "FAIL"
        elif outcomes and all(o == "skipped" for o in outcomes):
            status = "SKIP"
        elif outcomes:
            status = "PASS"
        else:
            status = "NOT RUN"
        terminalreporter.write_line(f"criterion {number:>2}: {status:<7} {_titles[number]}")
