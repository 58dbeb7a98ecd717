import pytest

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, label, passed, detail)``."""

    def record(number, label, passed, detail=''):
        _ACCEPTANCE.append((number, label, bool(passed), detail))
        return bool(passed)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section('acceptance criteria')
    for number, label, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        status = 'PASS' if passed else 'FAIL'
        suffix = f' -- {detail}' if detail else ''
        terminalreporter.write_line(f'[{status}] criterion {number}: {label}{suffix}')
