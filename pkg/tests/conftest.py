import pytest

# (criterion, passed, detail) rows filled in by test_acceptance
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for num, ok, detail in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {num:>2}: {detail}")


@pytest.fixture
def record():
    def _record(num, ok, detail):
        ACCEPTANCE_LINES.append((num, bool(ok), detail))
        print(f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}")
        return ok

    return _record


@pytest.fixture
def configs_dir():
    from pathlib import Path

    return Path(__file__).resolve().parent.parent / "configs"
