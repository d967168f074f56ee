"""Back-action-evading post-processing of the two homodyne records.

The combination is formed from measured outputs only.  In the amplitude
sector the records are ``β₊ₐ`` (pure vacuum, carries the back-action noise
``α₊ₐ``) and ``β₋ₐ`` (carries force plus back action); the combination

    β_comb = w_plus · β₊ₐ + w_minus · β₋ₐ,   w_minus = 1, w_plus = K/(γ_m - iΩ)

has no ``α₊ₐ`` content at any frequency.  The phase sector swaps roles:
``β₋φ`` is pure vacuum and ``β₊φ`` carries the motion.  For a general
homodyne angle φ both detectors read the rotated quadratures and the same
weights apply.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .freq_solver import FORCE_INPUTS, input_psd, transfer_matrix
from .model import SystemParams, pump_parameter


class Sector(enum.Enum):
    AMPLITUDE = "amplitude"
    PHASE = "phase"
    GENERAL_PHI = "general_phi"


class ForceTransferError(ZeroDivisionError):
    """The chosen combination carries no force signal at some frequency."""


@dataclass(frozen=True)
class CombinationWeights:
    """Weights of the two detector records at one or more frequencies.

    ``w_plus`` multiplies the sum output of the sector (``β₊ₐ`` or ``β₊φ``)
    and ``w_minus`` the difference output (``β₋ₐ`` or ``β₋φ``).  ``phi`` is
    the homodyne angle (0 in the amplitude sector, π/2 in the phase sector).
    In the phase sector the vacuum-only record is ``β₋φ``, so the canonical
    subtraction weight sits on ``w_minus`` there.  For a general angle the
    pair is the rotated sum record ``β₊ₐ cos φ + β₋φ sin φ`` (``w_plus``) and
    difference record ``β₋ₐ cos φ + β₊φ sin φ`` (``w_minus``).
    """

    frequency: np.ndarray
    w_plus: np.ndarray
    w_minus: np.ndarray
    sector: Sector
    phi: float = 0.0

    def output_vector(self) -> np.ndarray:
        """Weights on ``(β₊ₐ, β₋ₐ, β₊φ, β₋φ)`` in the solver's sum/difference basis.

        Detector k reads ``cos φ · b_{k,a} + sin φ · b_{k,φ}`` (sign flipped
        on the φ part of the lower sideband, so that φ = π/2 gives the pair
        ``b₊φ ± b₋φ`` whose sum is insensitive to the mechanics).  Expressed
        in the sum/difference outputs this maps the canonical detector pair
        to ``β₊ₐ cos φ + β₋φ sin φ`` and ``β₋ₐ cos φ + β₊φ sin φ``.
        """
        c, s = math.cos(self.phi), math.sin(self.phi)
        wp = np.asarray(self.w_plus, dtype=complex)
        wm = np.asarray(self.w_minus, dtype=complex)
        if self.sector is Sector.PHASE:
            return np.stack([0 * wp, 0 * wp, wp, wm], axis=-1)
        return np.stack([wp * c, wm * c, wm * s, wp * s], axis=-1)

    def scaled(self, factor: complex) -> CombinationWeights:
        return CombinationWeights(self.frequency, self.w_plus * factor,
                                  self.w_minus * factor, self.sector, self.phi)


def _sector_and_phi(sector):
    if isinstance(sector, Sector):
        if sector is Sector.GENERAL_PHI:
            raise ValueError("give the homodyne angle as a float for the general sector")
        return sector, (0.0 if sector is Sector.AMPLITUDE else math.pi / 2)
    if isinstance(sector, str):
        return _sector_and_phi(Sector(sector))
    return Sector.GENERAL_PHI, float(sector)


def bae_weights(params: SystemParams, omega, sector=Sector.AMPLITUDE) -> CombinationWeights:
    """Canonical back-action-evading weights.

    ``sector`` is :class:`Sector` (or its value string), or a float homodyne
    angle φ for the general case.  In the phase sector the back-action
    record is ``β₋φ`` and the motion record ``β₊φ``, so the roles of the
    two weights swap.
    """
    omega = np.asarray(omega, dtype=float)
    sec, phi = _sector_and_phi(sector)
    K = pump_parameter(params, omega)
    if np.any(K <= 0):
        raise ValueError("back-action weights need a nonzero pump (eta_c0 > 0)")
    canonical = K / (params.gamma_m - 1j * omega)
    if sec is Sector.PHASE:
        return CombinationWeights(omega, np.ones_like(canonical), canonical, sec, phi)
    return CombinationWeights(omega, canonical, np.ones_like(canonical), sec, phi)


def raw_weights(omega, sector=Sector.AMPLITUDE) -> CombinationWeights:
    """Weights that select the motion-carrying record alone (no subtraction)."""
    omega = np.asarray(omega, dtype=float)
    sec, phi = _sector_and_phi(sector)
    one, zero = np.ones(omega.shape, complex), np.zeros(omega.shape, complex)
    if sec is Sector.PHASE:
        return CombinationWeights(omega, one, zero, sec, phi)
    return CombinationWeights(omega, zero, one, sec, phi)


def combined_transfer(params: SystemParams, omega, weights: CombinationWeights) -> np.ndarray:
    """Transfer ``(..., 8)`` from every input to the weighted record."""
    return transfer_matrix(params, omega).combine(weights.output_vector())


def _referred(params, h):
    noise = (np.abs(h) ** 2 * input_psd(params)).sum(axis=-1)
    gain = (np.abs(h[..., FORCE_INPUTS]) ** 2).sum(axis=-1)
    if np.any(gain == 0):
        raise ForceTransferError("combined output has zero force transfer")
    return noise, gain


def force_referred_psd(params: SystemParams, omega, weights: CombinationWeights):
    """Noise PSD of the combination divided by its force gain.

    The force gain is ``|H_{f_a}|² + |H_{f_φ}|²``: the signal is referred to
    the force quadrature combination the record is most sensitive to, which
    reduces to the plain ``f_a`` transfer at zero detuning in the amplitude
    sector.
    """
    noise, gain = _referred(params, combined_transfer(params, omega, weights))
    return noise / gain


def force_referred_contributions(params: SystemParams, omega, weights: CombinationWeights):
    """Per-input force-referred contributions, shape ``(..., 8)`` (force columns zero)."""
    h = combined_transfer(params, omega, weights)
    _, gain = _referred(params, h)
    return np.abs(h) ** 2 * input_psd(params) / gain[..., None]


def _per_frequency(params, omega, K, func):
    omega = np.asarray(omega, dtype=float)
    flat = omega.ravel()
    out = np.array([func(params.with_pump(float(K), float(w)), w) for w in flat])
    return out.reshape(omega.shape + out.shape[1:])


def detuned_combination_psd(params: SystemParams, omega, K=None):
    """Force-referred PSD of the canonical combination with detuned sidebands.

    The zero-detuning amplitude-sector weights are applied to the exact
    detuned solution.  When ``K`` is given, the coupling is reset at each
    frequency so that ``K(Ω)`` equals ``K``.
    """
    if K is None:
        return force_referred_psd(params, omega, bae_weights(params, omega))
    return _per_frequency(params, omega, K,
                          lambda p, w: force_referred_psd(p, w, bae_weights(p, w)))


def detuned_contributions(params: SystemParams, omega, K=None):
    """Per-input breakdown of :func:`detuned_combination_psd`, shape ``(..., 8)``."""
    if K is None:
        return force_referred_contributions(params, omega, bae_weights(params, omega))
    return _per_frequency(params, omega, K,
                          lambda p, w: force_referred_contributions(p, w, bae_weights(p, w)))


def optimal_weights(params: SystemParams, omega: float, phi: float = 0.0):
    """Re-optimized weights minimizing the force-referred PSD at one frequency.

    Solves the 2x2 generalized Rayleigh quotient of noise over force gain for
    the two records at homodyne angle ``phi``.  Returns ``(weights, S_min)``.
    Not used by default; the canonical weights are kept under detuning.
    """
    tm = transfer_matrix(params, float(omega))
    basis = [
        CombinationWeights(np.asarray(omega), np.array(1 + 0j), np.array(0j), Sector.GENERAL_PHI, phi),
        CombinationWeights(np.asarray(omega), np.array(0j), np.array(1 + 0j), Sector.GENERAL_PHI, phi),
    ]
    H = np.stack([tm.combine(b.output_vector()) for b in basis])  # (2, 8)
    s = input_psd(params)
    N = (H * s) @ H.conj().T
    F = H[:, FORCE_INPUTS] @ H[:, FORCE_INPUTS].conj().T
    # the record is u^T H, so noise = v^H N v and gain = v^H F v with v = conj(u)
    vals, vecs = np.linalg.eig(np.linalg.solve(N, F))
    i = int(np.argmax(vals.real))
    if vals[i].real <= 0:
        raise ForceTransferError("no combination carries force signal")
    u = np.conj(vecs[:, i])
    if abs(u[1]) > 1e-300:
        u = u / u[1]
    w = CombinationWeights(np.asarray(omega), np.array(u[0]), np.array(u[1]), Sector.GENERAL_PHI, phi)
    return w, 1.0 / vals[i].real
