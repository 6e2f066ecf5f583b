import pytest

from support import CALC_FILES, write_repo

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def calc_repo(tmp_path):
    return write_repo(tmp_path / "calc", CALC_FILES)


@pytest.fixture
def criterion():
    """Record and print one PASS/FAIL line, then assert."""

    def check(number: int, title: str, ok: bool, detail: str):
        line = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
