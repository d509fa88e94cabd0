import numpy as np
import pytest
from hypothesis import settings

from aoiss import PowerFunction
from aoiss.harness import random_instance

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def P2():
    return PowerFunction.polynomial(2)


def seeded_instance(seed, **kw):
    return random_instance(np.random.default_rng(seed), **kw)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
