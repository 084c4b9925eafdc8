import pytest

_AC_LINES: dict = {}


@pytest.fixture
def report():
    """Record one 'AC-n PASS/FAIL details' line; returns the pass flag."""
    def _report(tag, ok, detail):
        line = f"{tag} {'PASS' if ok else 'FAIL'} {detail}"
        _AC_LINES[tag] = line
        print(line)
        return ok
    return _report


def pytest_terminal_summary(terminalreporter):
    if not _AC_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for tag in sorted(_AC_LINES, key=lambda s: int(s.split("-")[1])):
        terminalreporter.write_line(_AC_LINES[tag])
