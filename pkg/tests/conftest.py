import pytest

# criterion number -> (passed, one-line summary); filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(number, passed, summary):
        ACCEPTANCE[number] = (bool(passed), summary)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, summary = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {summary}")
