from fractions import Fraction

import pytest

from driftstab.config import reference_scenario
from driftstab.quantizer import QuantizerConfig


@pytest.fixture(scope="session")
def ref():
    return reference_scenario()


@pytest.fixture
def unit_cfg():
    """K=4 on the half-integer lattice; idx 0 is delta = 1, idx 2 is delta = 2."""
    return QuantizerConfig(K=4, s=Fraction(1, 2), A_exp=1, B_exp=2, L_idx=1)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


@pytest.fixture
def verdict(request):
    """Record one pass/fail line for the end-of-run acceptance summary."""
    results = request.config.stash[ACCEPTANCE_KEY]

    def record(n: int, ok: bool, detail: str):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        results[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(ACCEPTANCE_KEY, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
