import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optobae import structure as sx
from optobae.model import SystemParams


@pytest.fixture
def tuned():
    return SystemParams(1.0, 1e-3, 100.0).with_pump(1.0, 0.0)


def test_tuned_eigenvalues_exact(tuned):
    rep = sx.stability_eigenvalues(tuned)
    assert rep.stable
    np.testing.assert_array_equal(rep.eigenvalues, [-1.0, -1.0, -1e-3])


def test_uncoupled_eigenvalues_are_bare_rates():
    p = SystemParams(1.0, 1e-3, 100.0).with_detunings(0.01, 0.02)
    ev = sx.stability_eigenvalues(p).eigenvalues
    np.testing.assert_allclose(ev.real, [-1.0, -1.0, -1e-3], atol=1e-15)


def test_detuned_coupled_real_parts_move_but_trace_holds(tuned):
    # the detunings mix the sideband rates into the mechanics; only the trace is fixed
    p = tuned.with_detunings(0.01, 0.02)
    ev = sx.stability_eigenvalues(p).eigenvalues
    assert ev.real.sum() == pytest.approx(-2.001, abs=1e-12)
    assert ev[0].real == pytest.approx(-1.0492, abs=1e-3)
    assert sx.stability_eigenvalues(p).stable


@settings(max_examples=30)
@given(K=st.floats(0.0, 10.0), dp=st.floats(-0.5, 0.5), dm=st.floats(-0.5, 0.5))
def test_trace_invariant(K, dp, dm):
    p = SystemParams(1.0, 1e-3, 100.0, delta_plus=dp, delta_minus=dm).with_pump(K, 0.0)
    ev = sx.stability_eigenvalues(p).eigenvalues
    assert ev.sum() == pytest.approx(complex(-2.001, dp - dm), abs=1e-10)


def test_decoupled_modes_are_unit_vectors(tuned):
    e = sx.coherent_coupling_eigen(tuned, 0.0, omega0=5.0)
    np.testing.assert_allclose(e.frequencies, [5.0, 105.0, -95.0])
    np.testing.assert_allclose(e.vectors, np.eye(3), atol=1e-15)


@pytest.mark.parametrize("eta_d", [0.5, 2.0 + 1.0j, 10.0j])
def test_carrier_frequency_unshifted_and_sidebands_exact(tuned, eta_d):
    e = sx.coherent_coupling_eigen(tuned, eta_d, omega0=3.0)
    exact = sx.exact_coupled_frequencies(tuned, eta_d, omega0=3.0)
    np.testing.assert_allclose(e.frequencies, exact, rtol=1e-13)


def test_first_order_vectors_error_is_quadratic(tuned):
    errs = []
    for d in (1.0, 0.5, 0.25):
        v = sx.coherent_coupling_eigen(tuned, d * (1 + 1j)).vectors
        errs.append(np.max(np.abs(v - sx.first_order_vectors(tuned, d * (1 + 1j)))))
    slope = np.polyfit(np.log([1.0, 0.5, 0.25]), np.log(errs), 1)[0]
    assert slope == pytest.approx(2.0, abs=0.05)


def test_orthonormality_defect_scales_as_square(tuned):
    defects = [sx.eigenvector_orthonormality_defect(tuned, d) for d in (0.2, 0.1, 0.05)]
    np.testing.assert_allclose(np.array(defects[:-1]) / np.array(defects[1:]), 4.0, rtol=1e-3)
    assert defects[0] == pytest.approx(2 * 0.2**2 / 100.0**2, rel=1e-6)  # 2|ηd|²/ω_m²
    with pytest.raises(ValueError):
        sx.eigenvector_orthonormality_defect(tuned, 0.1, which="exact")


def test_two_mode_eigenvalues_half_factor():
    lam = sx.two_mode_eigenvalues(3.0, 1.0, 1.0)
    M = np.array([[3.0, -1j], [1j, 1.0]])
    np.testing.assert_allclose(np.sort(lam), np.linalg.eigvalsh(M), rtol=1e-14)
    unhalved = sx.two_mode_eigenvalues_unhalved(3.0, 1.0, 1.0)
    np.testing.assert_allclose(unhalved, 2 * lam, rtol=1e-14)


def test_qmfs_polynomial_matches_integration():
    g = 0.7
    cmp = sx.qmfs_evolve(g, [0.3, -1.0, 0.5, 0.2, 0.8, -0.4], np.linspace(0, 10 / g, 101))
    assert cmp.max_relative_error < 1e-9
    assert cmp.constant_drift < 1e-10
    np.testing.assert_array_equal(cmp.polynomial["Pi2"], 0.5)


def test_qmfs_frozen_endpoint():
    ev = sx.qmfs_polynomial(1.0, [0, 0, 1, 0, 0, 1], [2.0])
    assert ev["Pi1"][0] == 2.0 and ev["Q"][0] == 2.0
    assert ev["Phi2"][0] == -2.0 and ev["P"][0] == -2.0


def test_qmfs_pairs_are_conjugate():
    first, second = sx.qmfs_commutator_blocks()
    # Π₁ is conjugate to Φ₁ and Q to P, so within each triple nothing pairs with itself
    np.testing.assert_array_equal(first, 0.0)
    np.testing.assert_array_equal(second, 0.0)


def test_closed_flow_is_symplectic(tuned):
    rep = sx.symplectic_check(tuned)
    assert rep.defect < 1e-10
    assert rep.hamiltonian_residual == 0.0


def test_hamiltonian_drift_matches_after_quarter_turn(tuned):
    rep = sx.symplectic_check(tuned)
    assert rep.hamiltonian_mismatch_rotated == 0.0
    assert rep.hamiltonian_mismatch == pytest.approx(math.sqrt(2) * tuned.eta_c0, rel=1e-12)


def test_quarter_turn_is_symplectic():
    R = sx.QUARTER_TURN
    np.testing.assert_array_equal(R.T @ sx.J @ R, sx.J)
