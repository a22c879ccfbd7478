import numpy as np
import pytest

from stratising.model import StratifiedDataset
from stratising.simulation import SimulationDesign, simulate


@pytest.fixture(scope="session")
def chain_data():
    """p=5 chain, K=3 homogeneous strata, n_k=300."""
    _, _, data = simulate(SimulationDesign("chain", 5, 3, 300, 0.0, 1, seed=11))
    return data


@pytest.fixture(scope="session")
def hetero_data():
    """p=6 chain, K=3, rho=1, n_k=400."""
    truth, z, data = simulate(SimulationDesign("chain", 6, 3, 400, 1.0, 1, seed=5))
    return truth, z, data


def replicated(data: StratifiedDataset, K: int) -> StratifiedDataset:
    return StratifiedDataset.from_arrays([data.stratum(0)] * K)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


_CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA] = []


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(label, ok, detail)``; returns ``ok``."""

    def report(label, ok, detail=""):
        request.config.stash[_CRITERIA].append((label, bool(ok), detail))
        return bool(ok)

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_CRITERIA, [])
    if not lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for label, ok, detail in sorted(lines, key=lambda t: t[0]):
        terminalreporter.write_line(f"criterion {label:<5} {'PASS' if ok else 'FAIL'}  {detail}")
