import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title, limit_s): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title, limit = mark.args
    if rep.passed and rep.duration > limit:
        rep.outcome = "failed"
        rep.longrepr = f"runtime {rep.duration:.2f} s exceeds the {limit} s limit"
    _RESULTS[number] = (title, rep.passed, rep.duration, limit)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, ok, dur, limit = _RESULTS[number]
        terminalreporter.write_line(
            f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}  "
            f"({dur:.2f} s, limit {limit} s)")
