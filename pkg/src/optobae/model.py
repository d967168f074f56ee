"""Parameter types and derived quantities of the three-mode transducer.

All rates share one angular-frequency unit.  Nothing here assumes γ = 1; the
CLI merely defaults to that normalization.

Noise convention used package-wide: spectral densities are single-sided, in
the Fourier convention ``x(t) = ∫ x(Ω) e^{-iΩt} dΩ/2π``.  A unit white input
has ``<n(Ω) n*(Ω')> = 2π δ(Ω-Ω')`` (two-sided density 1/2, single-sided 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np


class ParameterError(ValueError):
    """Raised when a parameter set violates a model assumption."""


#: default factor used to decide that ``a ≪ b`` (``a <= b / HIERARCHY_FACTOR``)
HIERARCHY_FACTOR = 10.0


@dataclass(frozen=True)
class SystemParams:
    """Rates and couplings of the linearized transducer.

    ``eta_c0`` is the real product of the optomechanical coupling and the
    mean intracavity pump amplitude.  ``delta_plus``/``delta_minus`` are the
    sideband detunings, ``n_T`` the thermal occupancy entering the
    fluctuation-force correlator.
    """

    gamma: float
    gamma_m: float
    omega_m: float
    eta_c0: float = 0.0
    delta_plus: float = 0.0
    delta_minus: float = 0.0
    n_T: float = 0.0
    hierarchy_factor: float = field(default=HIERARCHY_FACTOR, compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("gamma", "gamma_m", "omega_m"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be a positive finite rate, got {value!r}")
        if not (math.isfinite(self.eta_c0) and self.eta_c0 >= 0):
            raise ParameterError(f"eta_c0 must be >= 0, got {self.eta_c0!r}")
        if not (math.isfinite(self.n_T) and self.n_T >= 0):
            raise ParameterError(f"n_T must be >= 0, got {self.n_T!r}")
        f = self.hierarchy_factor
        if f < 1:
            raise ParameterError("hierarchy_factor must be >= 1")
        if not self.gamma_m * f <= self.gamma:
            raise ParameterError(
                f"resolved-sideband hierarchy violated: need gamma_m <= gamma/{f:g} "
                f"(gamma_m={self.gamma_m!r}, gamma={self.gamma!r})"
            )
        if not self.gamma * f <= self.omega_m:
            raise ParameterError(
                f"resolved-sideband hierarchy violated: need gamma <= omega_m/{f:g} "
                f"(gamma={self.gamma!r}, omega_m={self.omega_m!r})"
            )
        for name in ("delta_plus", "delta_minus"):
            value = getattr(self, name)
            if not (math.isfinite(value) and abs(value) < self.gamma):
                raise ParameterError(f"|{name}| must be < gamma, got {value!r}")

    @property
    def couplings(self) -> DerivedCouplings:
        return DerivedCouplings.from_detunings(self.delta_plus, self.delta_minus)

    @property
    def capital_delta(self) -> float:
        return 0.5 * (self.delta_plus + self.delta_minus)

    @property
    def small_delta(self) -> float:
        return 0.5 * (self.delta_plus - self.delta_minus)

    def with_detunings(self, capital_delta: float, small_delta: float) -> SystemParams:
        """Copy with detunings set from their symmetric/antisymmetric parts."""
        return replace(
            self,
            delta_plus=capital_delta + small_delta,
            delta_minus=capital_delta - small_delta,
        )

    def with_pump(self, K: float, omega: float = 0.0) -> SystemParams:
        """Copy whose ``eta_c0`` gives pump parameter ``K`` at frequency ``omega``."""
        if K < 0:
            raise ParameterError("K must be >= 0")
        eta_c0 = math.sqrt(K * (self.gamma**2 + omega**2) / (4.0 * self.gamma))
        return replace(self, eta_c0=eta_c0)

    def replace(self, **changes) -> SystemParams:
        return replace(self, **changes)


@dataclass(frozen=True)
class DerivedCouplings:
    """Symmetric (``capital_delta``) and antisymmetric (``small_delta``) detunings."""

    capital_delta: float
    small_delta: float

    @classmethod
    def from_detunings(cls, delta_plus: float, delta_minus: float) -> DerivedCouplings:
        return cls(0.5 * (delta_plus + delta_minus), 0.5 * (delta_plus - delta_minus))

    @property
    def delta_plus(self) -> float:
        return self.capital_delta + self.small_delta

    @property
    def delta_minus(self) -> float:
        return self.capital_delta - self.small_delta


@dataclass(frozen=True)
class SignalPulse:
    """Resonant square force pulse.

    ``f_s0`` is the normalized amplitude ``F_s0 / sqrt(2 ħ ω_m m)``.  In the
    rotating frame the pulse is a constant force on the mechanical quadratures
    for ``|t - t0| < tau/2``::

        f_a   = f_s0 / sqrt(2) * cos(psi_f)
        f_phi = f_s0 / sqrt(2) * sin(psi_f)

    so ``psi_f = 0`` drives only the amplitude quadrature.
    """

    f_s0: float
    tau: float
    psi_f: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.f_s0) and self.f_s0 >= 0):
            raise ParameterError(f"f_s0 must be >= 0, got {self.f_s0!r}")
        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ParameterError(f"tau must be > 0, got {self.tau!r}")

    @classmethod
    def from_physical(cls, F_s0: float, mass: float, hbar_omega_m: float,
                      tau: float, psi_f: float = 0.0) -> SignalPulse:
        """Build a pulse from a physical force amplitude.

        ``hbar_omega_m`` is ħω_m in energy units consistent with ``F_s0`` and
        ``mass``; the result carries ``f_s0 = F_s0 / sqrt(2 ħ ω_m m)``.
        """
        return cls(F_s0 / math.sqrt(2.0 * hbar_omega_m * mass), tau, psi_f)

    @property
    def bandwidth(self) -> float:
        """Effective measurement bandwidth ``2π/τ``."""
        return 2.0 * math.pi / self.tau

    @property
    def quadratures(self) -> tuple[float, float]:
        amp = self.f_s0 / math.sqrt(2.0)
        return amp * math.cos(self.psi_f), amp * math.sin(self.psi_f)


def pump_parameter(params: SystemParams, omega):
    """Normalized probe power ``K(Ω) = 4 γ (ηC₀)² / (γ² + Ω²)``."""
    omega = np.asarray(omega, dtype=float)
    g = params.gamma
    return 4.0 * g * params.eta_c0**2 / (g**2 + omega**2)


def xi_factor(params: SystemParams, omega):
    """Unimodular cavity phase factor ``(γ + iΩ)/(γ - iΩ)``."""
    omega = np.asarray(omega, dtype=float)
    return (params.gamma + 1j * omega) / (params.gamma - 1j * omega)


def detuning_kernel(params: SystemParams, omega):
    """``D(Ω) = Δ / ((γ - iΩ)(γ_m - iΩ))`` with Δ the mean detuning."""
    omega = np.asarray(omega, dtype=float)
    return params.capital_delta / ((params.gamma - 1j * omega) * (params.gamma_m - 1j * omega))


def thermal_occupancy(hbar_omega_over_kT: float) -> float:
    """Occupancy factor ``1 / (1 - exp(-ħω_m/k_B T))``.

    This is the defining expression of the model; note it equals the Bose
    occupancy plus one and tends to 1, not 0, as T -> 0.
    """
    x = float(hbar_omega_over_kT)
    if not x > 0:
        raise ParameterError("hbar_omega_over_kT must be > 0")
    return 1.0 / -math.expm1(-x)
