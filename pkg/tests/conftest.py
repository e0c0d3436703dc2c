import pytest

from choquard import universal_constants


@pytest.fixture(scope="session")
def consts3():
    return universal_constants(3, 1.0)


@pytest.fixture(scope="session")
def consts3_fast():
    return universal_constants(3, 1.0, direct=False)


_VERDICTS = []


@pytest.fixture
def verdict():
    """Print and record a one-line PASS/FAIL verdict, then assert it."""

    def _check(tag: str, ok: bool, detail: str):
        line = f"{tag}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _VERDICTS.append(line)
        assert ok, line

    return _check


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
