import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", deadline=None, max_examples=200, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fast_opts():
    """Short training settings for structural tests."""
    from udi.pipeline import TrainOptions

    return TrainOptions(default_epochs=4, patience=3, encoder_hidden=(16,), feature_dim=8, mi_hidden=(16,))


@pytest.fixture
def small_redundant():
    from udi.synthdata import gen_redundant

    return gen_redundant(n=400, seed=0)


@pytest.fixture
def small_complementary():
    from udi.synthdata import gen_complementary

    return gen_complementary(n=400, seed=0)


_ACCEPTANCE = []


@pytest.fixture
def acceptance_line(capsys):
    """Record (and print) the one-line verdict of an acceptance criterion."""

    def emit(number, passed, text, seconds):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {text}  [{seconds:.1f}s]"
        _ACCEPTANCE.append((number, line))
        with capsys.disabled():
            print("\n" + line)
        return passed

    return emit


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
