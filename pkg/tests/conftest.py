"""Collects the one-line verdicts of the acceptance suite and prints them at the end."""

import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record ``PASS``/``FAIL`` for one criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_VERDICTS):
        terminalreporter.write_line(line)
