import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))
torch.set_num_threads(1)

ACCEPTANCE_LINES = []


def random_stochastic(rng, n, k, dtype=torch.float64):
    a = rng.random((n, k)) + 1e-3
    return torch.tensor(a / a.sum(1, keepdims=True), dtype=dtype)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def report():
    """Record one acceptance line; printed in the terminal summary."""
    def _report(name, passed, detail=""):
        ACCEPTANCE_LINES.append(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
