import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optobae import analytics as an
from optobae import estimator as est
from optobae.freq_solver import ALPHA_A_PLUS, ALPHA_PHI_MINUS, input_psd
from optobae.model import SystemParams, pump_parameter

OMEGA = np.logspace(-5, 1, 40)


def test_amplitude_weights_null_back_action(desk):
    h = est.combined_transfer(desk, OMEGA, est.bae_weights(desk, OMEGA))
    assert np.max(np.abs(h[:, ALPHA_A_PLUS])) < 1e-12


def test_phase_weights_null_back_action(desk):
    w = est.bae_weights(desk, OMEGA, "phase")
    assert w.sector is est.Sector.PHASE and w.phi == pytest.approx(math.pi / 2)
    h = est.combined_transfer(desk, OMEGA, w)
    assert np.max(np.abs(h[:, ALPHA_PHI_MINUS])) < 1e-12


@pytest.mark.parametrize("sector", [est.Sector.AMPLITUDE, est.Sector.PHASE, 0.7])
def test_combination_matches_bae_closed_form(desk, sector):
    S = est.force_referred_psd(desk, OMEGA, est.bae_weights(desk, OMEGA, sector))
    np.testing.assert_allclose(S, an.bae_spectrum(desk, OMEGA, pump_parameter(desk, OMEGA)), rtol=1e-10)


@pytest.mark.parametrize("sector", [est.Sector.AMPLITUDE, est.Sector.PHASE, 1.1])
def test_raw_record_matches_sql_closed_form(desk, sector):
    S = est.force_referred_psd(desk, OMEGA, est.raw_weights(OMEGA, sector))
    np.testing.assert_allclose(S, an.sql_spectrum_raw(desk, OMEGA, pump_parameter(desk, OMEGA)), rtol=1e-10)


def test_general_sector_requires_angle(desk):
    with pytest.raises(ValueError):
        est.bae_weights(desk, 0.1, est.Sector.GENERAL_PHI)


def test_weights_need_pump():
    p = SystemParams(1.0, 1e-3, 100.0)
    with pytest.raises(ValueError, match="pump"):
        est.bae_weights(p, 0.1)


def test_vacuum_only_record_has_no_force(desk):
    w = est.CombinationWeights(np.asarray(0.1), np.array(1.0 + 0j), np.array(0j), est.Sector.AMPLITUDE)
    with pytest.raises(est.ForceTransferError):
        est.force_referred_psd(desk, 0.1, w)


def test_weights_scale_invariance(desk):
    w = est.bae_weights(desk, OMEGA)
    a = est.force_referred_psd(desk, OMEGA, w)
    b = est.force_referred_psd(desk, OMEGA, w.scaled(3.0 - 2.0j))
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_contributions_sum_to_total(desk):
    p = desk.with_detunings(1e-3, 2e-3).replace(n_T=1.5)
    c = est.detuned_contributions(p, OMEGA)
    np.testing.assert_allclose(c.sum(-1), est.detuned_combination_psd(p, OMEGA), rtol=1e-12)
    assert np.all(c[:, 6:] == 0)
    # the thermal column carries 2γ_m(2n_T+1) exactly at zero detuning
    c0 = est.force_referred_contributions(desk.replace(n_T=1.5), OMEGA, est.bae_weights(desk, OMEGA))
    np.testing.assert_allclose(c0[:, 4] + c0[:, 5], 2e-3 * 4.0, rtol=1e-10)


def test_fixed_pump_combination_tracks_closed_form(desk):
    p = desk.with_detunings(1e-3, 1e-2)
    S = est.detuned_combination_psd(p, np.array([0.0, 0.1]), K=1e-3)
    A = an.detuned_spectrum(p, np.array([0.0, 0.1]), 1e-3)
    np.testing.assert_allclose(S, A, rtol=1e-3)


def test_frozen_detuned_value(desk):
    p = desk.with_detunings(1e-3, 1e-2)
    S = float(est.detuned_combination_psd(p, 0.05))
    assert S == pytest.approx(0.004630082920936037, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(omega=st.floats(1e-4, 3.0), phi=st.floats(0.0, math.pi),
       big=st.floats(-0.05, 0.0), small=st.floats(-0.05, 0.05))
def test_reoptimized_weights_never_worse(omega, phi, big, small):
    p = SystemParams(1.0, 1e-3, 100.0).with_pump(1.0, 0.0).with_detunings(big, small)
    w_opt, s_opt = est.optimal_weights(p, omega, phi)
    canonical = est.force_referred_psd(p, omega, est.bae_weights(p, omega, phi))
    assert s_opt <= canonical * (1 + 1e-9)
    assert est.force_referred_psd(p, omega, w_opt) == pytest.approx(s_opt, rel=1e-8)


def test_reoptimized_weights_recover_canonical_when_tuned(desk):
    w, s = est.optimal_weights(desk, 0.2)
    canonical = est.bae_weights(desk, 0.2)
    assert complex(w.w_plus) == pytest.approx(complex(canonical.w_plus), rel=1e-8)
    assert s == pytest.approx(float(an.bae_spectrum(desk, 0.2, pump_parameter(desk, 0.2))), rel=1e-10)
    assert input_psd(desk)[ALPHA_A_PLUS] == 1.0
