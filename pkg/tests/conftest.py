import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

_ACCEPTANCE = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def record():
    """Collect ``(criterion, ok, detail)`` lines for the end-of-run acceptance table."""

    def _rec(num, name, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2}: {name}" + (f"  ({detail})" if detail else "")
        _ACCEPTANCE.append((num, line))
        print(line)
        return ok

    return _rec


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
