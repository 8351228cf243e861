import pytest

_ACCEPTANCE: list = []


@pytest.fixture
def acceptance():
    """Record one ``CRITERION n: PASS|FAIL detail`` line, shown in the terminal summary."""

    def record(criterion: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE.append((criterion, f"CRITERION {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE, key=lambda item: item[0]):
        terminalreporter.write_line(line)
