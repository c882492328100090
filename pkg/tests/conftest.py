"""Collects per-criterion outcomes from tests marked ``criterion`` and prints
one PASS/FAIL line for each at the end of the run."""

import pytest

_OUTCOMES: dict[int, list[bool]] = {}
_TITLES: dict[int, str] = {}
_NOTES: dict[int, list[str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number n")


def _criterion(item):
    m = item.get_closest_marker("criterion")
    return (m.args[0], m.args[1]) if m else (None, None)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    n, title = _criterion(item)
    if n is None:
        return
    _TITLES[n] = title
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        _OUTCOMES.setdefault(n, []).append(rep.passed)


@pytest.fixture
def report(request):
    """Append a line to the acceptance summary of this test's criterion."""
    n, _ = _criterion(request.node)

    def add(line: str) -> None:
        _NOTES.setdefault(n, []).append(line)

    return add


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        ok = all(_OUTCOMES[n])
        tr.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {_TITLES[n]}")
        for line in _NOTES.get(n, []):
            tr.write_line(f"    {line}")
