import pytest

_ACCEPTANCE: list[str] = []


@pytest.fixture
def record():
    """Record one acceptance line; the test still asserts on its own."""
    def _record(label: str, ok: bool, detail: str) -> None:
        _ACCEPTANCE.append(f"{label} {'PASS' if ok else 'FAIL'}  {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
