import pytest

_CRITERIA: list[str] = []


class CriterionLog:
    """Records one PASS/FAIL line per acceptance criterion and fails the test on FAIL."""

    def __call__(self, number: int, name: str, ok: bool, detail: str = "") -> None:
        line = f"criterion {number} [{name}]: {'PASS' if ok else 'FAIL'}" + (f" ({detail})" if detail else "")
        _CRITERIA.append(line)
        print(line)
        assert ok, line


@pytest.fixture
def criterion():
    return CriterionLog()


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)
