import math
import warnings

import pytest

from phasecrb.errors import RegimeViolation
from phasecrb.fisher import cliff_integrals
from phasecrb.models import CliffParameters, cliff_model, gaussian_profile

WAVELENGTH = 633e-9
REFERENCE_W = 1.4e-6  # w * alpha ~ 100 for the 80 degree sidewall


@pytest.fixture(autouse=True)
def _quiet_regime_warning():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RegimeViolation)
        yield


@pytest.fixture(scope="session")
def ref():
    """Quarter-wave step with an 80 degree sidewall at 633 nm."""
    return CliffParameters.from_optics(WAVELENGTH, WAVELENGTH / 4, beta=math.radians(80.0))


@pytest.fixture(scope="session")
def beam():
    return gaussian_profile(REFERENCE_W)


@pytest.fixture(scope="session")
def model2(ref):
    return cliff_model(ref)


@pytest.fixture(scope="session")
def model_h(ref):
    return cliff_model(ref, ("h",))


@pytest.fixture(scope="session")
def integrals(ref, beam):
    return cliff_integrals(ref, beam)


def beam_for(p, w_alpha):
    return gaussian_profile(w_alpha / p.alpha)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
