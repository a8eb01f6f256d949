import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict(request):
    """Record one ``PASS``/``FAIL`` line for the terminal summary and stdout."""

    def report(ok: bool, detail: str) -> bool:
        line = f"{request.node.name}: {'PASS' if ok else 'FAIL'}  {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
