import pytest

from ductpml import DuctConfig


@pytest.fixture(scope="session")
def cfg():
    """Workhorse configuration: subsonic flow, two propagating modes."""
    return DuctConfig(d=1.0, M=0.3, k=5.0, x_minus=-1.0, x_plus=1.0, L=2.0)


@pytest.fixture(scope="session")
def cfg_m0():
    """No-flow configuration (classical Helmholtz limit)."""
    return DuctConfig(d=1.0, M=0.0, k=5.0, x_minus=-1.0, x_plus=1.0, L=2.0)
