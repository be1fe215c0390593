import numpy as np
import pytest

from decapleak.sim import LeakageModel, LeakWindow

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def per_bit_model(seed: int = 0, samples: int = 200) -> LeakageModel:
    """Noiseless model where each bit of the last byte has its own amplitude."""
    windows = tuple(
        LeakWindow(byte_index=0, center=100, width=8, alpha=2.0 ** -(b + 4), shape="rect", bit_index=b)
        for b in range(8)
    )
    return LeakageModel(samples_per_trace=samples, windows=windows, seed=seed)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
