import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def overfit():
    """Tiny preset fitted to four synthetic 64x64 images at x4 for 2000 steps."""
    from hsnet.experiments import desk_pairs, desk_train_config, overfit_run
    from hsnet.model import preset

    return overfit_run(preset("tiny", scale=4), desk_train_config(2000), desk_pairs(4, 64, 4))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tgen():
    return torch.Generator().manual_seed(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
