import math

import numpy as np
import pytest

from rankwedge.model import ModelParams

SQRT_HALF = math.sqrt(0.5)


def params(sigma_sq=0.5, g=0.5, h=1.0, x1=1.0, x2=0.5):
    return ModelParams(g, h, sigma=math.sqrt(sigma_sq), x1=x1, x2=x2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def report(number: int, passed: bool, detail: str) -> bool:
    """Record one acceptance line; the terminal summary repeats them all."""
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
