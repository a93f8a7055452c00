import pytest

from shadowperc import kernel

_ACCEPTANCE = {}


@pytest.fixture
def bf():
    return kernel.bargmann_fock()


@pytest.fixture
def acceptance(request):
    """Record one line per acceptance criterion; the summary prints them all."""

    def record(number, title, ok, detail=""):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}"
        if detail:
            line += f"  ({detail})"
        _ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
