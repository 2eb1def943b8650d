import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from manifoldmri.acquisition import Acquisition, AcquisitionSpec, extract_navigators
from manifoldmri.phantom import PhantomSpec, make_phantom

settings.register_profile(
    "artifact", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("artifact")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def default_phantom():
    """Noiseless default phantom with its clean measurements and navigators."""
    pspec = PhantomSpec()
    X, theta_c, theta_r = make_phantom(pspec)
    aspec = AcquisitionSpec()
    op = Acquisition(aspec)
    B = op.forward(X)
    return {"pspec": pspec, "X": X, "theta_c": theta_c, "theta_r": theta_r,
            "aspec": aspec, "op": op, "B": B, "Z": extract_navigators(B, aspec)}



# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def acceptance_lines():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
