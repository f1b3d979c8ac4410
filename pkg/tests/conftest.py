import pytest

_VERDICTS: list[str] = []


def record_verdict(cid, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  criterion {cid}: {detail}"
    print(line)
    _VERDICTS.append(line)
    return ok


@pytest.fixture
def verdict():
    return record_verdict


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
