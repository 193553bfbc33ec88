import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

BIPED = "1111-1111-1001"
COMB = "1111111-1010101"
BIPED_LARGE = "111111-111111-100011-100011"


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
