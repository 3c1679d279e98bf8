import pytest

_CRITERIA = {}


@pytest.fixture
def record():
    """record(n, passed, detail): one summary line per acceptance criterion."""
    def _record(n, passed, detail):
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        line = f"[{status}] criterion {n}: {detail}"
        _CRITERIA[n] = line
        print(line, flush=True)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[n])
