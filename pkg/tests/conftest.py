"""Collects acceptance-criterion outcomes and prints one PASS/FAIL line per criterion."""

from collections import defaultdict

import pytest

_OUTCOMES = defaultdict(list)
_TITLES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): test belongs to an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    _TITLES[number] = title
    if report.when == "call" or (report.when == "setup" and not report.passed):
        notes = [str(value) for key, value in item.user_properties if key == "detail"]
        _OUTCOMES[number].append((item.name, report.passed, notes))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        results = _OUTCOMES[number]
        ok = all(passed for _, passed, _ in results)
        failed = [name for name, passed, _ in results if not passed]
        notes = "; ".join(n for _, _, ns in results for n in ns)
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {_TITLES[number]}"
        if failed:
            line += f"  [failed: {', '.join(failed)}]"
        if notes:
            line += f"  ({notes})"
        terminalreporter.write_line(line)
