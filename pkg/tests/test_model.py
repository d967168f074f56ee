import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optobae.model import (
    DerivedCouplings, ParameterError, SignalPulse, SystemParams,
    detuning_kernel, pump_parameter, thermal_occupancy, xi_factor,
)


def test_hierarchy_is_enforced():
    with pytest.raises(ParameterError, match="hierarchy"):
        SystemParams(gamma=1.0, gamma_m=0.5, omega_m=100.0)
    with pytest.raises(ParameterError, match="hierarchy"):
        SystemParams(gamma=1.0, gamma_m=1e-3, omega_m=5.0)
    # a looser factor admits the same set
    SystemParams(gamma=1.0, gamma_m=0.5, omega_m=100.0, hierarchy_factor=2.0)


@pytest.mark.parametrize("field, value", [
    ("gamma", -1.0), ("gamma_m", 0.0), ("omega_m", math.inf),
    ("eta_c0", -0.1), ("n_T", -1.0), ("delta_plus", 1.0), ("delta_minus", -2.0),
])
def test_invalid_values_rejected(field, value):
    kwargs = dict(gamma=1.0, gamma_m=1e-3, omega_m=100.0)
    kwargs[field] = value
    with pytest.raises(ParameterError):
        SystemParams(**kwargs)


def test_detuning_split_round_trip():
    p = SystemParams(1.0, 1e-3, 100.0).with_detunings(0.03, -0.01)
    assert p.delta_plus == pytest.approx(0.02)
    assert p.delta_minus == pytest.approx(0.04)
    c = p.couplings
    assert (c.capital_delta, c.small_delta) == pytest.approx((0.03, -0.01))
    assert DerivedCouplings(0.03, -0.01).delta_minus == pytest.approx(0.04)


@given(K=st.floats(1e-8, 1e4), omega=st.floats(0.0, 10.0))
def test_with_pump_inverts_pump_parameter(K, omega):
    p = SystemParams(1.0, 1e-3, 100.0).with_pump(K, omega)
    assert pump_parameter(p, omega) == pytest.approx(K, rel=1e-12)


def test_pump_parameter_frozen_value():
    p = SystemParams(1.0, 1e-3, 100.0, eta_c0=0.5)
    assert float(pump_parameter(p, 0.0)) == 1.0
    assert float(pump_parameter(p, 1.0)) == 0.5


@settings(max_examples=50)
@given(omega=st.floats(-100.0, 100.0))
def test_xi_is_unimodular(omega):
    p = SystemParams(1.0, 1e-3, 100.0)
    assert abs(xi_factor(p, omega)) == pytest.approx(1.0, abs=1e-14)


def test_detuning_kernel_at_zero_frequency():
    p = SystemParams(2.0, 1e-3, 100.0).with_detunings(0.01, 0.0)
    assert complex(detuning_kernel(p, 0.0)) == pytest.approx(0.01 / (2.0 * 1e-3))
    assert complex(detuning_kernel(p.with_detunings(0.0, 0.01), 0.3)) == 0


def test_thermal_occupancy_frozen():
    # 1/(1 - e^{-1})
    assert thermal_occupancy(1.0) == pytest.approx(1.5819767068693265, rel=1e-15)
    assert thermal_occupancy(50.0) == pytest.approx(1.0, abs=1e-20)
    with pytest.raises(ParameterError):
        thermal_occupancy(0.0)


def test_pulse_quadratures_and_bandwidth():
    pulse = SignalPulse(2.0, tau=4.0, psi_f=math.pi / 2)
    fa, fphi = pulse.quadratures
    assert fa == pytest.approx(0.0, abs=1e-15)
    assert fphi == pytest.approx(math.sqrt(2.0))
    assert pulse.bandwidth == pytest.approx(math.pi / 2)
    with pytest.raises(ParameterError):
        SignalPulse(1.0, tau=0.0)


def test_pulse_from_physical_normalization():
    pulse = SignalPulse.from_physical(F_s0=4.0, mass=2.0, hbar_omega_m=1.0, tau=1.0)
    assert pulse.f_s0 == pytest.approx(2.0)


def test_pump_parameter_broadcasts():
    p = SystemParams(1.0, 1e-3, 100.0, eta_c0=0.5)
    out = pump_parameter(p, np.zeros((3, 2)))
    assert out.shape == (3, 2)
