import numpy as np
import pytest
import torch

from frozen_ists.data_model import ISTSSample, Observation


def random_sample(rng: np.random.Generator, n_vars: int | None = None, idx: int = 0) -> ISTSSample:
    """Random valid sample with shared timestamps across variables (so vector rows have >1 entry)."""
    n_vars = n_vars or int(rng.integers(1, 6))
    n_times = int(rng.integers(1, 12))
    times = np.unique(rng.uniform(0, 10, size=n_times))
    obs = []
    for t in times:
        chosen = rng.random(n_vars) < 0.5
        if not chosen.any():
            chosen[rng.integers(n_vars)] = True
        for n in np.flatnonzero(chosen):
            obs.append(Observation(float(t), int(n), float(rng.normal())))
    rng.shuffle(obs)
    return ISTSSample(f"s{idx}", n_vars, tuple(obs))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _torch_threads():
    torch.set_num_threads(1)
    yield


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance PASS/FAIL lines, which output capture would otherwise hide."""
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
