import numpy as np
import pytest

from epcircuits import eplocator
from epcircuits.dynamics import system_matrix
from epcircuits.model import OscillatorParams, default_table1, fig2_sweep


@pytest.fixture(scope="session")
def table1():
    return default_table1()


@pytest.fixture(scope="session")
def table1_matrix(table1):
    return system_matrix(table1)


@pytest.fixture(scope="session")
def circuit_ep(table1):
    result, _ = eplocator.locate_ep(fig2_sweep(table1))
    return result


@pytest.fixture(scope="session")
def mech_ep():
    base = OscillatorParams(1.0, 1.0, k1=0.1, k2=0.0)
    return eplocator.find_ep(1.0 - 0.05j, {"f": 0.1, "g": 0.01}, base)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_circuit(rng, base=None):
    """Component values spread log-uniformly around the defaults."""
    base = base or default_table1()
    scale = lambda lo, hi: float(np.exp(rng.uniform(np.log(lo), np.log(hi))))
    lp = base.Lp * scale(0.3, 3)
    ls = base.Ls * scale(0.3, 3)
    kappa = rng.uniform(0.01, 0.6)
    return base.with_values(
        Cp=base.Cp * scale(0.3, 3),
        Cs=base.Cs * scale(0.3, 3),
        Lp=lp,
        Ls=ls,
        R1=scale(0.1, 30),
        R2=scale(0.1, 30),
        Rp=scale(100, 1e5),
        Rs=scale(100, 1e5),
        Mmut=kappa * float(np.sqrt(lp * ls)),
    )
