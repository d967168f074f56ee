"""Structural checks: stability, coherent coupling, QMFS dynamics, symplecticity.

Canonical ordering for the symplectic form is ``(d_a, d_φ, Φ₁, Π₁, Φ₂, Π₂)``
with ``[d_a, d_φ] = [Φ₁, Π₁] = [Φ₂, Π₂] = i`` and

    Φ₁ = (c₊ₐ + c₋ₐ)/√2,  Π₁ = (c₊φ + c₋φ)/√2,
    Φ₂ = (c₊ₐ - c₋ₐ)/√2,  Π₂ = (c₊φ - c₋φ)/√2,   Q = d_a, P = d_φ.

In the solver basis these are ``g_{a+}, g_{φ+}, g_{a-}, g_{φ-}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.integrate import solve_ivp

from .freq_solver import D_A, D_PHI, G_A_MINUS, G_A_PLUS, G_PHI_MINUS, G_PHI_PLUS, drift_matrix
from .model import SystemParams

#: solver-basis indices in the canonical ordering (d_a, d_φ, Φ₁, Π₁, Φ₂, Π₂)
CANONICAL_ORDER = (D_A, D_PHI, G_A_PLUS, G_PHI_PLUS, G_A_MINUS, G_PHI_MINUS)
CANONICAL_LABELS = ("d_a", "d_phi", "Phi1", "Pi1", "Phi2", "Pi2")

_PAIR = np.array([[0.0, 1.0], [-1.0, 0.0]])
#: block-diagonal symplectic form in the canonical ordering
J = linalg.block_diag(_PAIR, _PAIR, _PAIR)


# --------------------------------------------------------------------- stability

@dataclass(frozen=True)
class StabilityReport:
    eigenvalues: np.ndarray
    stable: bool


def stability_matrix(params: SystemParams) -> np.ndarray:
    """Drift of the mean-field amplitudes ``(c₋*, c₊, d)`` with real ``ηC₀``."""
    g = params.eta_c0
    return np.array([
        [-params.gamma - 1j * params.delta_minus, 0.0, g],
        [0.0, -params.gamma + 1j * params.delta_plus, -g],
        [g, g, -params.gamma_m],
    ], dtype=complex)


#: change of basis to (c₋* - c₊, d, c₋* + c₊)
_STABILITY_BASIS = np.array([[1.0, -1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0]])


def stability_eigenvalues(params: SystemParams) -> StabilityReport:
    """Eigenvalues sorted by real part (most damped first).

    The tuned matrix has a defective double eigenvalue ``-γ``; in the basis
    ``(c₋* - c₊, d, c₋* + c₊)`` it is exactly upper triangular, so the
    eigenvalues come out to machine precision.
    """
    T = _STABILITY_BASIS
    M = T @ stability_matrix(params) @ np.linalg.inv(T)
    ev = np.linalg.eigvals(M)
    ev = ev[np.lexsort((ev.imag, ev.real))]
    return StabilityReport(ev, bool(np.all(ev.real < 0)))


# ------------------------------------------------------------- coherent coupling

def coupling_matrix(params: SystemParams, eta_d: complex, omega0: float = 0.0) -> np.ndarray:
    """Hermitian frequency matrix on ``(c₀, c₊, c₋)`` with the mechanics frozen.

    ``eta_d`` is the product of the coupling and the mechanical amplitude.
    Sideband frequencies include the detunings,
    ``ω₊ = ω₀ + ω_m + δ₊`` and ``ω₋ = ω₀ - ω_m + δ₋``.
    """
    w_plus = omega0 + params.omega_m + params.delta_plus
    w_minus = omega0 - params.omega_m + params.delta_minus
    e = complex(eta_d)
    return np.array([
        [omega0, 1j * e.conjugate(), -1j * e],
        [-1j * e, w_plus, 0.0],
        [1j * e.conjugate(), 0.0, w_minus],
    ], dtype=complex)


def _own_mode_normalized(vectors: np.ndarray) -> np.ndarray:
    """Scale column k so that its k-th component equals 1."""
    return vectors / np.diag(vectors)[None, :]


@dataclass(frozen=True)
class CoherentEigen:
    """Eigenfrequencies ``(λ₁, λ₂, λ₃)`` near ``(ω₀, ω₊, ω₋)`` with eigenvectors.

    ``vectors`` holds the amplitude distribution vectors as columns, scaled
    so the component on the mode each one continues is 1.
    """

    frequencies: np.ndarray
    vectors: np.ndarray


def coherent_coupling_eigen(params: SystemParams, eta_d: complex, omega0: float = 0.0) -> CoherentEigen:
    M = coupling_matrix(params, eta_d, omega0)
    w, V = np.linalg.eigh(M)
    # eigh sorts ascending: (≈ω₋, ≈ω₀, ≈ω₊); reorder to (ω₀, ω₊, ω₋)
    order = [1, 2, 0]
    w, V = w[order], V[:, order]
    return CoherentEigen(w, _own_mode_normalized(V))


def first_order_vectors(params: SystemParams, eta_d: complex) -> np.ndarray:
    """Analytic amplitude vectors to first order in ``ηd`` (columns)."""
    e = complex(eta_d) / params.omega_m
    return np.array([
        [1.0, 1j * e.conjugate(), 1j * e],
        [1j * e, 1.0, 0.0],
        [1j * e.conjugate(), 0.0, 1.0],
    ], dtype=complex)


def exact_coupled_frequencies(params: SystemParams, eta_d: complex, omega0: float = 0.0):
    """``ω₀`` and ``ω₀ ± sqrt(ω_m² + 2|ηd|²)`` for tuned sidebands."""
    r = math.sqrt(params.omega_m**2 + 2.0 * abs(eta_d) ** 2)
    return np.array([omega0, omega0 + r, omega0 - r])


def eigenvector_orthonormality_defect(params: SystemParams, eta_d: complex,
                                      which: str = "numeric") -> float:
    """``max |(v_i, v_j) - δ_ij|`` for the own-mode-normalized vectors."""
    if which == "numeric":
        V = coherent_coupling_eigen(params, eta_d).vectors
    elif which == "first_order":
        V = first_order_vectors(params, eta_d)
    else:
        raise ValueError(f"unknown vector set {which!r}")
    G = V.conj().T @ V
    return float(np.max(np.abs(G - np.eye(3))))


def two_mode_eigenvalues(omega_plus: float, omega_minus: float, eta_d: complex) -> np.ndarray:
    """Eigenfrequencies of the two-mode coupled scheme.

    Uses the mean ``(ω₊+ω₋)/2`` and half the splitting, which is what
    diagonalizing ``[[ω₊, -iηd], [iη*d*, ω₋]]`` gives.
    """
    half = 0.5 * math.sqrt((omega_plus - omega_minus) ** 2 + 4.0 * abs(eta_d) ** 2)
    mean = 0.5 * (omega_plus + omega_minus)
    return np.array([mean + half, mean - half])


def two_mode_eigenvalues_unhalved(omega_plus: float, omega_minus: float, eta_d: complex) -> np.ndarray:
    """The same expression without the factors ½ (kept for comparison only)."""
    root = math.sqrt((omega_plus - omega_minus) ** 2 + 4.0 * abs(eta_d) ** 2)
    return np.array([omega_plus + omega_minus + root, omega_plus + omega_minus - root])


# ---------------------------------------------------------------------- QMFS

QMFS_LABELS = ("Pi1", "Q", "Pi2", "Phi2", "P", "Phi1")


@dataclass(frozen=True)
class QmfsEvolution:
    """Closed-system QMFS trajectories.

    ``values`` has shape ``(len(time), 6)`` in :data:`QMFS_LABELS` order; ``g``
    is the coupling ``√2·ηC₀``.
    """

    time: np.ndarray
    values: np.ndarray
    g: float

    def __getitem__(self, label: str) -> np.ndarray:
        return self.values[:, QMFS_LABELS.index(label)]


def qmfs_drift(g: float) -> np.ndarray:
    """Linear closed-system equations in :data:`QMFS_LABELS` order.

    ``Π̇₁ = g Q, Q̇ = g Π₂, Π̇₂ = 0`` and ``Φ̇₂ = g P, Ṗ = -g Φ₁, Φ̇₁ = 0``.
    """
    A = np.zeros((6, 6))
    A[0, 1] = g
    A[1, 2] = g
    A[3, 4] = g
    A[4, 5] = -g
    return A


def qmfs_polynomial(g: float, initial, t) -> QmfsEvolution:
    """Polynomial-in-time solution of :func:`qmfs_drift`."""
    pi1, q, pi2, phi2, p, phi1 = np.asarray(initial, dtype=float)
    t = np.asarray(t, dtype=float)
    vals = np.column_stack([
        pi1 + g * q * t + 0.5 * g**2 * pi2 * t**2,
        q + g * pi2 * t,
        np.full_like(t, pi2),
        phi2 + g * p * t - 0.5 * g**2 * phi1 * t**2,
        p - g * phi1 * t,
        np.full_like(t, phi1),
    ])
    return QmfsEvolution(t, vals, g)


def qmfs_integrate(g: float, initial, t, rtol: float = 1e-13) -> QmfsEvolution:
    """Numerical integration of the same equations (DOP853)."""
    A = qmfs_drift(g)
    t = np.asarray(t, dtype=float)
    sol = solve_ivp(lambda _, y: A @ y, (t[0], t[-1]), np.asarray(initial, dtype=float),
                    method="DOP853", t_eval=t, rtol=rtol, atol=rtol * 1e-3)
    if not sol.success:
        raise RuntimeError(sol.message)
    return QmfsEvolution(t, sol.y.T, g)


@dataclass(frozen=True)
class QmfsComparison:
    polynomial: QmfsEvolution
    numeric: QmfsEvolution
    max_relative_error: float
    constant_drift: float


def qmfs_evolve(g: float, initial, t_grid) -> QmfsComparison:
    """Evaluate the polynomial solution, integrate numerically, and compare.

    ``max_relative_error`` is the largest deviation normalized by the
    magnitude of each trajectory; ``constant_drift`` the largest change of
    Π₂ or Φ₁ in the numerical solution.
    """
    poly = qmfs_polynomial(g, initial, t_grid)
    num = qmfs_integrate(g, initial, t_grid)
    scale = np.maximum(np.abs(poly.values).max(axis=0), 1e-300)
    rel = float(np.max(np.abs(num.values - poly.values) / scale))
    drift = float(max(np.max(np.abs(num["Pi2"] - num["Pi2"][0])),
                      np.max(np.abs(num["Phi1"] - num["Phi1"][0]))))
    return QmfsComparison(poly, num, rel, drift)


def qmfs_commutator_blocks() -> tuple[np.ndarray, np.ndarray]:
    """Restrictions of ``J`` to ``{Π₁, Q, Π₂}`` and ``{Φ₂, P, Φ₁}``."""
    idx = {name: i for i, name in enumerate(CANONICAL_LABELS)}
    first = [idx["Pi1"], idx["d_a"], idx["Pi2"]]
    second = [idx["Phi2"], idx["d_phi"], idx["Phi1"]]
    return J[np.ix_(first, first)], J[np.ix_(second, second)]


# ----------------------------------------------------------------- symplecticity

def to_canonical(matrix: np.ndarray) -> np.ndarray:
    """Re-express a solver-basis drift matrix in the canonical ordering."""
    idx = list(CANONICAL_ORDER)
    return matrix[np.ix_(idx, idx)]


def closed_drift(params: SystemParams) -> np.ndarray:
    """Decay-free, detuning-free solver drift in the canonical ordering."""
    closed = params.replace(delta_plus=0.0, delta_minus=0.0)
    A = drift_matrix(closed)
    A[np.diag_indices(6)] = 0.0
    return to_canonical(A)


def hamiltonian_drift(hessian: np.ndarray) -> np.ndarray:
    """``ẋ = J H x`` for the quadratic Hamiltonian ``½ xᵀ H x`` (ħ = 1)."""
    return J @ hessian


def coupling_hessian(eta_c0: float) -> np.ndarray:
    """Hessian of ``V = ηC₀ (c₊ₐ + c₋ₐ) d_a + ηC₀ (c₊φ - c₋φ) d_φ``.

    In the canonical variables ``V = √2 ηC₀ (Φ₁ d_a + Π₂ d_φ)``.
    """
    k = math.sqrt(2.0) * eta_c0
    H = np.zeros((6, 6))
    i = {name: n for n, name in enumerate(CANONICAL_LABELS)}
    H[i["Phi1"], i["d_a"]] = H[i["d_a"], i["Phi1"]] = k
    H[i["Pi2"], i["d_phi"]] = H[i["d_phi"], i["Pi2"]] = k
    return H


#: quarter turn of the mechanical quadratures, (d_a, d_φ) -> (-d_φ, d_a)
QUARTER_TURN = linalg.block_diag(_PAIR.T, np.eye(4))


@dataclass(frozen=True)
class SymplecticReport:
    """``defect`` is ``max |ΦᵀJΦ - J|`` over the time grid.

    ``hamiltonian_mismatch`` compares the Hamiltonian-generated drift with the
    closed solver drift entry by entry; ``hamiltonian_mismatch_rotated`` does
    the same after the mechanical quarter turn.
    """

    defect: float
    times: np.ndarray
    hamiltonian_mismatch: float
    hamiltonian_mismatch_rotated: float
    hamiltonian_residual: float


def symplectic_check(params: SystemParams, times=None) -> SymplecticReport:
    A = closed_drift(params)
    g = math.sqrt(2.0) * params.eta_c0
    if times is None:
        times = np.linspace(0.0, 10.0 / g if g > 0 else 10.0, 41)
    times = np.asarray(times, dtype=float)
    defect = 0.0
    for t in times:
        Phi = linalg.expm(A * t)
        defect = max(defect, float(np.max(np.abs(Phi.T @ J @ Phi - J))))
    B = hamiltonian_drift(coupling_hessian(params.eta_c0))
    R = QUARTER_TURN
    rotated = R @ B @ R.T
    # a linear flow is Hamiltonian iff J⁻¹A is symmetric
    S = np.linalg.solve(J, A)
    return SymplecticReport(
        defect, times,
        float(np.max(np.abs(B - A))),
        float(np.max(np.abs(rotated - A))),
        float(np.max(np.abs(S - S.T))),
    )
