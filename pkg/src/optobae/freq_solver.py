"""Exact frequency-domain solution of the linearized quadrature dynamics.

The solver works in the sum/difference basis of the sideband quadratures,

    g_{a±} = (c_{+a} ± c_{-a})/√2,    g_{φ±} = (c_{+φ} ± c_{-φ})/√2,

together with the mechanical quadratures d_a, d_φ.  Inputs and outputs use
the same basis (α for incident vacuum, β for the emitted fields).  In the
time domain the dynamics read ``ẋ = A x + B n`` with

    ġ_{a+} = -γ g_{a+} - Δ g_{φ+} - δ g_{φ-}               + √(2γ) α_{a+}
    ġ_{a-} = -γ g_{a-} - δ g_{φ+} - Δ g_{φ-} - √2 ηC₀ d_a  + √(2γ) α_{a-}
    ġ_{φ+} = -γ g_{φ+} + Δ g_{a+} + δ g_{a-} - √2 ηC₀ d_φ  + √(2γ) α_{φ+}
    ġ_{φ-} = -γ g_{φ-} + δ g_{a+} + Δ g_{a-}               + √(2γ) α_{φ-}
    ḋ_a    = -γ_m d_a + √2 ηC₀ g_{a+} + √(2γ_m) q_a + f_a
    ḋ_φ    = -γ_m d_φ + √2 ηC₀ g_{φ-} + √(2γ_m) q_φ + f_φ

which is the rotating-wave model with the detunings kept to all orders (no
expansion in δ±).  In the frequency domain ``M(Ω) x = B n`` with
``M = -iΩ I - A``; outputs follow from ``β = -α + √(2γ) g``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import SystemParams

STATE_LABELS = ("g_a_plus", "g_a_minus", "g_phi_plus", "g_phi_minus", "d_a", "d_phi")
INPUT_LABELS = (
    "alpha_a_plus", "alpha_a_minus", "alpha_phi_plus", "alpha_phi_minus",
    "q_a", "q_phi", "f_a", "f_phi",
)
OUTPUT_LABELS = ("beta_a_plus", "beta_a_minus", "beta_phi_plus", "beta_phi_minus")

G_A_PLUS, G_A_MINUS, G_PHI_PLUS, G_PHI_MINUS, D_A, D_PHI = range(6)
ALPHA_A_PLUS, ALPHA_A_MINUS, ALPHA_PHI_PLUS, ALPHA_PHI_MINUS, Q_A, Q_PHI, F_A, F_PHI = range(8)
BETA_A_PLUS, BETA_A_MINUS, BETA_PHI_PLUS, BETA_PHI_MINUS = range(4)

#: rows of the full transfer matrix: six states followed by four outputs
ROW_LABELS = STATE_LABELS + OUTPUT_LABELS
NOISE_INPUTS = slice(0, 6)
FORCE_INPUTS = slice(6, 8)

_SECTOR_A = (G_A_PLUS, G_A_MINUS, D_A)
_SECTOR_PHI = (G_PHI_PLUS, G_PHI_MINUS, D_PHI)


class SolverError(RuntimeError):
    """The linear system could not be solved reliably at some frequency."""

    def __init__(self, message: str, omega: float):
        super().__init__(f"{message} (omega={omega!r})")
        self.omega = omega


@dataclass(frozen=True)
class QuadratureState:
    """Sideband and mechanical quadratures in the per-mode (c-basis) layout.

    Fields are complex Fourier amplitudes in the frequency domain or real
    samples in the time domain.  Use :meth:`from_sum_difference` and
    :meth:`to_sum_difference` to move to the basis used by the solver.
    """

    c_plus_a: complex
    c_minus_a: complex
    c_plus_phi: complex
    c_minus_phi: complex
    d_a: complex
    d_phi: complex

    def as_array(self) -> np.ndarray:
        return np.array([self.c_plus_a, self.c_minus_a, self.c_plus_phi,
                         self.c_minus_phi, self.d_a, self.d_phi])

    def to_sum_difference(self) -> np.ndarray:
        return SUM_DIFFERENCE @ self.as_array()

    @classmethod
    def from_sum_difference(cls, x) -> QuadratureState:
        return cls(*(SUM_DIFFERENCE.T @ np.asarray(x)))


_s = 1.0 / np.sqrt(2.0)
#: orthogonal map from (c+a, c-a, c+φ, c-φ, d_a, d_φ) to the solver basis
SUM_DIFFERENCE = np.array([
    [_s, _s, 0, 0, 0, 0],
    [_s, -_s, 0, 0, 0, 0],
    [0, 0, _s, _s, 0, 0],
    [0, 0, _s, -_s, 0, 0],
    [0, 0, 0, 0, 1, 0],
    [0, 0, 0, 0, 0, 1],
])


def drift_matrix(params: SystemParams) -> np.ndarray:
    """Real 6x6 drift ``A`` of ``ẋ = A x + B n`` in the solver basis."""
    gam, gm = params.gamma, params.gamma_m
    big, small = params.capital_delta, params.small_delta
    k = np.sqrt(2.0) * params.eta_c0
    A = np.zeros((6, 6))
    A[G_A_PLUS, [G_A_PLUS, G_PHI_PLUS, G_PHI_MINUS]] = [-gam, -big, -small]
    A[G_A_MINUS, [G_A_MINUS, G_PHI_PLUS, G_PHI_MINUS, D_A]] = [-gam, -small, -big, -k]
    A[G_PHI_PLUS, [G_PHI_PLUS, G_A_PLUS, G_A_MINUS, D_PHI]] = [-gam, big, small, -k]
    A[G_PHI_MINUS, [G_PHI_MINUS, G_A_PLUS, G_A_MINUS]] = [-gam, small, big]
    A[D_A, [D_A, G_A_PLUS]] = [-gm, k]
    A[D_PHI, [D_PHI, G_PHI_MINUS]] = [-gm, k]
    return A


def input_matrix(params: SystemParams) -> np.ndarray:
    """Real 6x8 input coupling ``B``; columns follow :data:`INPUT_LABELS`."""
    B = np.zeros((6, 8))
    for row in range(4):
        B[row, row] = np.sqrt(2.0 * params.gamma)
    B[D_A, Q_A] = B[D_PHI, Q_PHI] = np.sqrt(2.0 * params.gamma_m)
    B[D_A, F_A] = B[D_PHI, F_PHI] = 1.0
    return B


def build_system(params: SystemParams, omega):
    """Return ``(M, B)`` with ``M(Ω) x(Ω) = B n(Ω)``.

    ``M`` has shape ``(..., 6, 6)`` following the shape of ``omega``.
    """
    omega = np.asarray(omega, dtype=float)
    A = drift_matrix(params)
    M = -1j * omega[..., None, None] * np.eye(6) - A
    return M, input_matrix(params)


@dataclass(frozen=True)
class TransferMatrix:
    """Linear response at one or more frequencies.

    ``entries`` has shape ``(..., 10, 8)``: rows are :data:`ROW_LABELS` (six
    intracavity/mechanical quadratures, then four outputs), columns are
    :data:`INPUT_LABELS`.
    """

    frequency: np.ndarray
    entries: np.ndarray
    condition: np.ndarray

    @property
    def state(self) -> np.ndarray:
        return self.entries[..., :6, :]

    @property
    def outputs(self) -> np.ndarray:
        return self.entries[..., 6:, :]

    def output(self, which) -> np.ndarray:
        """Row(s) for one output selected by index or label."""
        return self.outputs[..., _output_index(which), :]

    def combine(self, weights) -> np.ndarray:
        """Transfer of the weighted output sum ``Σ_k w_k β_k``."""
        weights = np.asarray(weights, dtype=complex)
        if weights.shape[-1] != 4:
            raise ValueError(f"expected 4 output weights, got shape {weights.shape}")
        return np.einsum("...k,...kj->...j", weights, self.outputs)


def _output_index(which) -> int:
    if isinstance(which, str):
        return OUTPUT_LABELS.index(which)
    return int(which)


def transfer_matrix(params: SystemParams, omega, max_condition: float = 1e12) -> TransferMatrix:
    """Solve for all state and output quadratures at the given frequencies."""
    omega_arr = np.asarray(omega, dtype=float)
    M, B = build_system(params, omega_arr)
    cond = np.linalg.cond(M)
    bad = ~np.isfinite(cond) | (cond > max_condition)
    if np.any(bad):
        w = float(np.ravel(omega_arr)[np.flatnonzero(np.ravel(bad))[0]])
        raise SolverError("ill-conditioned quadrature system", w)
    X = np.linalg.solve(M, np.broadcast_to(B.astype(complex), M.shape[:-2] + B.shape))
    out = -np.eye(4, 8) + np.sqrt(2.0 * params.gamma) * X[..., :4, :]
    return TransferMatrix(omega_arr, np.concatenate([X, out], axis=-2), cond)


def input_psd(params: SystemParams, include_force: bool = False, force_psd=(1.0, 1.0)) -> np.ndarray:
    """Single-sided PSDs of the eight inputs (force columns zero unless requested)."""
    thermal = 2.0 * params.n_T + 1.0
    s = np.array([1.0, 1.0, 1.0, 1.0, thermal, thermal, 0.0, 0.0])
    if include_force:
        s[FORCE_INPUTS] = force_psd
    return s


def psd_contributions(params: SystemParams, omega, which=None, combination=None,
                      include_force: bool = False) -> np.ndarray:
    """Per-input contributions ``|H_j|² S_j`` to an output PSD, shape ``(..., 8)``."""
    tm = transfer_matrix(params, omega)
    if combination is not None:
        if which is not None:
            raise ValueError("give either an output selector or combination weights")
        h = tm.combine(combination)
    else:
        h = tm.output(which)
    return np.abs(h) ** 2 * input_psd(params, include_force)


def output_psd(params: SystemParams, omega, which=None, combination=None,
               include_force: bool = False):
    """Single-sided PSD of one output, or of a complex-weighted combination.

    The eight inputs are statistically independent, so the PSD is the sum of
    ``|transfer|² × input PSD``.  The force columns are excluded unless
    ``include_force`` is set (then unit PSD is assumed for each).
    """
    return psd_contributions(params, omega, which, combination, include_force).sum(axis=-1)
