import pytest

# filled by tests/test_acceptance.py, one line per criterion
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def verdict():
    def record(number, title, ok, detail=""):
        line = f"[criterion {number:>2}] {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record
