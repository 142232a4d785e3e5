import numpy as np
import pytest

from ce_ofdma.config import WaveformConfig
from ce_ofdma.experiments import build_filter

_ACCEPTANCE_LINES = []


def record_acceptance(line):
    _ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance():
    """Callable that records one PASS/FAIL line for the summary."""
    return record_acceptance


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def table_cfg():
    """N_c = 4096, N_d = 256, Bbar = 1, 120 kHz."""
    return WaveformConfig()


@pytest.fixture(scope="session")
def optimized_filter(table_cfg):
    return build_filter({"kind": "optimized-ce"}, table_cfg)


@pytest.fixture(scope="session")
def nce_filter(table_cfg):
    return build_filter({"kind": "nce", "bw_t": 1.0}, table_cfg)


@pytest.fixture(scope="session")
def small_cfg():
    """N_c = 1024, N_d = 64 (Phi = 16)."""
    return WaveformConfig(n_subcarriers=1024, n_complex_symbols=64)
