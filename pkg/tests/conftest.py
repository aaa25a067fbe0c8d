import numpy as np
import pytest

from hawkesclt import Kernel, MarkDistribution, Model

# criterion id -> (passed, summary), filled by test_acceptance
ACCEPTANCE = {}


@pytest.fixture
def exp_model():
    return Model(Kernel.exponential(1.0, 2.0), 1.0, MarkDistribution.dirac(1.0))


@pytest.fixture
def zero_model():
    return Model(Kernel.zero(), 1.0, MarkDistribution.dirac(1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        ok, line = ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid:2d}: {'PASS' if ok else 'FAIL'}  {line}")
