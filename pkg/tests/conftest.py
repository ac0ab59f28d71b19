import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from todo_attn import TokenGrid  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"

# acceptance verdicts, printed in the terminal summary
ACCEPTANCE: list[str] = []


def random_grid(rng, h, w, d, scale=1.0):
    return TokenGrid((rng.standard_normal((h, w, d)) * scale).astype(np.float32))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fixtures_dir():
    return FIXTURES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
