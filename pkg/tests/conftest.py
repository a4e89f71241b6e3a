import hypothesis
import numpy as np
import pytest

from sleepdbn.simulator import make_default_ground_truth, simulate_cohort

hypothesis.settings.register_profile("fast", max_examples=20, deadline=None)
hypothesis.settings.register_profile("default", deadline=None)
hypothesis.settings.load_profile("default")


@pytest.fixture(scope="session")
def default_gt():
    return make_default_ground_truth()


@pytest.fixture(scope="session")
def sim_cohort(default_gt):
    return simulate_cohort(default_gt, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
