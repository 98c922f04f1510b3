import re

import numpy as np
import pytest

from ncergodic import AlgebraSpec

# criterion number -> (status, detail), filled by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE, key=lambda k: (int(re.match(r"\d+", str(k)).group()), str(k))):
        status, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {str(k):>2}: {status}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def m2():
    return AlgebraSpec.factor(2)


@pytest.fixture
def mixed_spec():
    return AlgebraSpec((2, 3, 1), (1.0, 0.5, 2.0))
