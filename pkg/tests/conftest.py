import numpy as np
import pytest

from lsmtrees.models import BlackScholesParams, TimeGrid
from lsmtrees.payoffs import Payoff


@pytest.fixture
def put1d_market():
    """1-D put market used throughout: K=110, S0=100, sigma=0.25, r=0.1, T=1, N=10."""
    return BlackScholesParams.uniform(1, 100.0, 0.1, 0.25), Payoff("Put1D", 110.0), TimeGrid.uniform(1.0, 10)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion and print it immediately."""
    lines = request.config.stash.setdefault(VERDICTS, [])
    capture = request.config.pluginmanager.getplugin("capturemanager")

    def record(criterion: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
        lines.append(line)
        with capture.global_and_fixture_disabled():
            print("\n" + line, flush=True)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
