import numpy as np
import pytest

from _verdicts import VERDICTS
from querycommittee import build_finite_profile


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        title, ok, detail = VERDICTS[number]
        line = f"[{'PASS' if ok else 'FAIL'}] {number:2d}. {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))


@pytest.fixture
def fig1a():
    """Two equal voter groups: one approves c0 only, the other c1 and c2."""
    return build_finite_profile([{0}, {1, 2}], 3)


@pytest.fixture
def rng():
    return np.random.default_rng(20260101)
