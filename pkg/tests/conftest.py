import numpy as np
import pytest

from relrep.dataset import SyntheticSpec, gen_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_blobs():
    # 4 classes x 30 samples in 6-d: fast enough for end-to-end checks
    return gen_synthetic(SyntheticSpec(4, 30, 6, 0.3, seed=3))


@pytest.fixture(scope="session")
def two_clusters():
    """Two tight clusters of 10 points, 50 units apart."""
    r = np.random.default_rng(0)
    a = r.normal(0.0, 0.05, size=(10, 3))
    b = r.normal(0.0, 0.05, size=(10, 3)) + 50.0
    return np.vstack([a, b]), np.repeat([0, 1], 10)


_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def report():
    """Record a one-line verdict for an acceptance criterion."""
    def add(num: int, ok: bool, detail: str) -> None:
        line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE[num] = line
        print(line)
    return add


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[num])
