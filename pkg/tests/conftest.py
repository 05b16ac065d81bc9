import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS: list[tuple[int, bool, str]] = []


@pytest.fixture
def criterion():
    """``criterion(k, ok, detail)`` records an acceptance verdict, prints it and asserts it."""

    def record(k: int, ok: bool, detail: str):
        ok = bool(ok)
        _RESULTS.append((k, ok, detail))
        print(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {k} failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k, ok, detail in sorted(_RESULTS):
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
