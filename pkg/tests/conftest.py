import pytest

from optobae.model import SystemParams


@pytest.fixture
def desk():
    """Desk-scale parameters: γ = 1, γ_m = 1e-3, K(0) = 1."""
    return SystemParams(gamma=1.0, gamma_m=1e-3, omega_m=100.0).with_pump(1.0, 0.0)


@pytest.fixture
def narrow():
    """Narrow mechanical line: γ = 1, γ_m = 1e-6."""
    return SystemParams(gamma=1.0, gamma_m=1e-6, omega_m=100.0)
