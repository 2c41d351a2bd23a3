"""Collects one verdict line per acceptance criterion and prints them after the run."""

import pytest

_LINES = []


class Verdicts:
    def record(self, number, title, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}: {detail}"
        _LINES.append((number, line))
        print(line)
        return ok


@pytest.fixture(scope="session")
def verdict():
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_LINES):
        terminalreporter.write_line(line)
