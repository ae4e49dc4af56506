"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA = {}   # nodeid -> criterion id
_OUTCOMES = {}   # criterion id -> list of (nodeid, passed)
_DETAILS = {}    # criterion id -> list of detail strings


def pytest_collection_modifyitems(config, items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            _CRITERIA[item.nodeid] = mark.args[0]


def pytest_runtest_logreport(report):
    crit = _CRITERIA.get(report.nodeid)
    if crit is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _OUTCOMES.setdefault(crit, []).append((report.nodeid, report.passed))


@pytest.fixture
def acceptance(request):
    """``acceptance("measured value ...")`` attaches a detail to the test's criterion line."""
    crit = request.node.get_closest_marker("criterion").args[0]

    def note(text):
        _DETAILS.setdefault(crit, []).append(text)

    return note


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_OUTCOMES, key=lambda c: int(c[1:])):
        results = _OUTCOMES[crit]
        ok = all(p for _, p in results)
        detail = "; ".join(_DETAILS.get(crit, []))
        terminalreporter.write_line(f"{crit} {'PASS' if ok else 'FAIL'}  ({len(results)} checks) {detail}")
