from hypothesis import settings
import numpy as np
import pytest

from plrd.smoothing import RdDataset

settings.register_profile("plrd", deadline=None)
settings.load_profile("plrd")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def make_data(rng, n, cutoff=0.0, jump=0.1, noise=0.1, mean=None):
    """Uniform design on [-1, 1] with both sides of the cutoff populated."""
    x = rng.uniform(-1, 1, n)
    x[0], x[1] = cutoff - 0.5, cutoff + 0.5
    mu = mean(x) if mean is not None else 0.0
    y = mu + jump * (x >= cutoff) + noise * rng.standard_normal(n)
    return RdDataset(x, y, cutoff)


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one summary line per acceptance check; printed after the run."""
    def record(name, ok, detail):
        status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
        _ACCEPTANCE.append(f"{status}  {name}: {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
