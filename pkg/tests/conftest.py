import math

import pytest

from liquidator.lob import LobParams
from liquidator.market import ConstantVol, ModelParams, SlowOU, validate_venues
from liquidator.sim import venues_for
from liquidator.stoch_vol import StochVolProblem

E = math.e
ETA_PER = 0.005
ETA_TEM = 0.01

# filled by the acceptance module, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def base_params():
    return ModelParams(Q=100.0, T=1.0, lam=0.1, K=0.1, vol=ConstantVol(E))


@pytest.fixture
def single_venue():
    return validate_venues([(1.0, ETA_TEM)], ETA_PER)


@pytest.fixture
def stoch_problem():
    vol = SlowOU(m=1.0, epsilon=0.01, xi=2.0, rho=-0.4)
    return StochVolProblem(ModelParams(100.0, 1.0, 0.1, 0.1, vol), ETA_TEM, ETA_PER)


def lob_params(**over):
    kw = dict(Q=100.0, T=1.0, K=0.1, eta_per=ETA_PER, eta_tem=ETA_TEM, sigma=E, lambda_M=100.0,
              Delta=0.3, eta_u=0.02, eta_d=0.02, eta_I=0.02)
    kw.update(over)
    return LobParams(**kw)


@pytest.fixture
def lob():
    return lob_params()


def identical(n):
    return venues_for(n, ETA_TEM, ETA_PER)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
