import numpy as np
import pytest

from rashomon_quartet.synth import Dataset, GenConfig, generate


@pytest.fixture(scope="session")
def small_data():
    """Default generator at a size that keeps unit tests fast."""
    return generate(GenConfig(n_train=300, n_test=400, seed=11))


@pytest.fixture
def toy():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 3))
    y = 2.0 * X[:, 0] - X[:, 1] + 0.1 * rng.normal(size=40)
    return Dataset.from_xy(X, y)


_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record one acceptance line, then assert it."""

    def check(name: str, ok: bool, detail: str = ""):
        _ACCEPTANCE.append((name, bool(ok), detail))
        assert ok, f"{name}: {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
