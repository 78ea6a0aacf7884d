import sys
from pathlib import Path

import numpy as np
import pytest


def rand_basis(rng, n, r):
    if r == 0:
        return np.zeros((n, 0))
    return np.linalg.qr(rng.standard_normal((n, r)))[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SMALL_INI = Path(__file__).resolve().parents[1] / "configs" / "small.ini"


@pytest.fixture
def small_cfg():
    from reprocs.harness import load_config

    return load_config(SMALL_INI)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
