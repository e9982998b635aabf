import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from eso_levy.contract import ContractSpec, IntensitySpec
from eso_levy.levy import TABLE3_MODELS
from eso_levy.spectral import GridSpec

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

R, Q = 0.05, 0.04


@pytest.fixture(scope="session")
def models():
    return TABLE3_MODELS


@pytest.fixture
def small_grid():
    return GridSpec(6.0, 4096, 256)


def table3_contract(t_v=0.0, lam=0.2, lam_pre=0.1, **kw):
    base = dict(S0=10.0, K=10.0, r=R, q=Q, T=8.0, t_v=t_v, intensity=IntensitySpec.constant(lam, lam_pre))
    base.update(kw)
    return ContractSpec(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
