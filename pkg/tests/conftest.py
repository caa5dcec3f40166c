import pytest

# criterion number -> (passed, description, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, desc, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {num:2d}. {desc}: {detail}")


@pytest.fixture
def criterion():
    def record(num, desc, ok, detail=""):
        ACCEPTANCE[num] = (bool(ok), desc, detail)
        assert ok, f"criterion {num} ({desc}) failed: {detail}"

    return record
