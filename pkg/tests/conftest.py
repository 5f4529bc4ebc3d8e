from contextlib import contextmanager

import pytest

# criterion number -> {part: passed}
_OUTCOMES = {}
_LABELS = {}


@pytest.fixture
def criterion(request):
    @contextmanager
    def track(number: int, label: str):
        _LABELS.setdefault(number, label)
        parts = _OUTCOMES.setdefault(number, {})
        parts[request.node.name] = False
        yield
        parts[request.node.name] = True
    return track


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        ok = all(_OUTCOMES[number].values())
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {_LABELS[number]}")
