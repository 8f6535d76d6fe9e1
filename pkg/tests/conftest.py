import pytest

_LINES: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion."""

    def record(n: int, ok: bool, detail: str = "") -> bool:
        _LINES.append(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip())
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES):
            terminalreporter.write_line(line)
