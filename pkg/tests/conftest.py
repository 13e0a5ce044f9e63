"""Collects per-criterion outcomes from tests marked ``criterion`` and prints
one PASS/FAIL line for each at the end of the session."""
import pytest

_titles = {}
_status = {}  # number -> list of (nodeid, passed, measured)


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m:
            _titles[m.args[0]] = m.args[1]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        measured = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _status.setdefault(m.args[0], []).append((item.nodeid, rep.passed, measured))


def pytest_terminal_summary(terminalreporter):
    if not _titles:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_titles):
        runs = _status.get(n, [])
        if not runs:
            verdict = "NOT RUN"
        else:
            verdict = "PASS" if all(ok for _, ok, _ in runs) else "FAIL"
        tr.write_line(f"[{n:2d}] {verdict:7s} {_titles[n]}")
        for _, _, measured in runs:
            if measured:
                tr.write_line(f"              {measured}")
