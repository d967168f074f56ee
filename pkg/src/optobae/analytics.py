"""Closed-form force-noise spectra and pump optimization.

Every function accepts scalar or array ``omega``/``K`` and broadcasts.  Force
spectra are single-sided and normalized to the force units of
:class:`optobae.model.SignalPulse`.

The detuned formulas are usually quoted with thermal term ``2γ_m(n_T+1)`` while the
tuned ones use ``2γ_m(2n_T+1)``.  ``thermal`` selects the prefactor:
``"2n+1"`` (default, continuous with the tuned result) or ``"n+1"``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .model import SystemParams, detuning_kernel, xi_factor

THERMAL_CONVENTIONS = ("2n+1", "n+1")

# golden-section search window, relative to sqrt(γ_m² + Ω²)
K_SEARCH_SPAN = (1e-6, 1e6)
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class OptimizationError(RuntimeError):
    pass


def thermal_term(params: SystemParams, thermal: str = "2n+1") -> float:
    if thermal == "2n+1":
        return 2.0 * params.gamma_m * (2.0 * params.n_T + 1.0)
    if thermal == "n+1":
        return 2.0 * params.gamma_m * (params.n_T + 1.0)
    raise ValueError(f"unknown thermal convention {thermal!r}; expected one of {THERMAL_CONVENTIONS}")


def _mech2(params, omega):
    return params.gamma_m**2 + np.asarray(omega, dtype=float) ** 2


def _opt2(params, omega):
    return params.gamma**2 + np.asarray(omega, dtype=float) ** 2


def _check_K(K):
    K = np.asarray(K, dtype=float)
    if np.any(~(K > 0)):
        raise ValueError("pump parameter K must be > 0")
    return K


def sql_bound(params: SystemParams, omega):
    """``S_SQL = 2 sqrt(γ_m² + Ω²)``."""
    return 2.0 * np.sqrt(_mech2(params, omega))


def sql_spectrum_raw(params: SystemParams, omega, K):
    """Force noise of the raw difference-amplitude output: thermal + shot + back action."""
    K = _check_K(K)
    return thermal_term(params) + _mech2(params, omega) / K + K


def bae_spectrum(params: SystemParams, omega, K):
    """Force noise after back-action subtraction: thermal + shot only."""
    K = _check_K(K)
    return thermal_term(params) + _mech2(params, omega) / K


def detuned_spectrum(params: SystemParams, omega, K, thermal: str = "2n+1"):
    """Force noise of the back-action-subtracted output with detuned sidebands."""
    K = _check_K(K)
    omega = np.asarray(omega, dtype=float)
    gam = params.gamma
    m2, o2 = _mech2(params, omega), _opt2(params, omega)
    D = detuning_kernel(params, omega)
    xi = xi_factor(params, omega)
    D2 = np.abs(D) ** 2
    denom = 1.0 + D2 * K**2
    shot = m2 / (K * denom)
    mismatch = np.abs(params.small_delta - xi * K * D * (gam - 1j * omega)) ** 2
    back_action = K * (mismatch + 4.0 * gam**2 * D2 * m2) / (o2 * denom)
    return thermal_term(params, thermal) + shot + back_action


def residual_back_action(params: SystemParams, omega, K):
    """Low-pump residual back action ``K (δ²/(γ²+Ω²) + 4γ²Δ²/(γ²+Ω²)²)``."""
    K = _check_K(K)
    o2 = _opt2(params, omega)
    d, D = params.small_delta, params.capital_delta
    return K * (d**2 / o2 + 4.0 * params.gamma**2 * D**2 / o2**2)


def small_pump_spectrum(params: SystemParams, omega, K, thermal: str = "2n+1"):
    return thermal_term(params, thermal) + _mech2(params, omega) / _check_K(K) \
        + residual_back_action(params, omega, K)


def intermediate_pump_spectrum(params: SystemParams, omega, K, thermal: str = "2n+1"):
    K = _check_K(K)
    D2 = np.abs(detuning_kernel(params, omega)) ** 2
    return thermal_term(params, thermal) + _mech2(params, omega) / K + K**3 * D2


def large_pump_spectrum(params: SystemParams, omega, K, thermal: str = "2n+1"):
    K = _check_K(K)
    m2, o2 = _mech2(params, omega), _opt2(params, omega)
    return thermal_term(params, thermal) + K + 4.0 * params.gamma**2 * m2 / (K * o2)


class Regime(enum.Enum):
    SMALL_PUMP = "SmallPump"
    INTERMEDIATE_PUMP = "IntermediatePump"
    LARGE_PUMP = "LargePump"


@dataclass(frozen=True)
class RegimeClassification:
    regime: Regime
    k_crit1: float
    k_crit2: float


def critical_pumps(params: SystemParams, omega) -> tuple[float, float]:
    """Pump levels separating the small/intermediate and intermediate/large regimes."""
    big, small = abs(params.capital_delta), abs(params.small_delta)
    m = math.sqrt(float(_mech2(params, omega)))
    o = math.sqrt(float(_opt2(params, omega)))
    if big == 0.0:
        return math.inf, math.inf
    return m * small / big, o * m / big


def regime_classify(params: SystemParams, omega: float, K: float) -> RegimeClassification:
    k1, k2 = critical_pumps(params, omega)
    if K < k1:
        regime = Regime.SMALL_PUMP
    elif K < k2:
        regime = Regime.INTERMEDIATE_PUMP
    else:
        regime = Regime.LARGE_PUMP
    return RegimeClassification(regime, k1, k2)


def closed_form_optima(params: SystemParams, omega: float, thermal: str = "2n+1") -> dict:
    """Per-regime asymptotic optima.

    Keys map to ``(K, S)`` pairs; ``K`` is ``None`` where the formula only
    gives a boundary value.  Both small-pump sub-cases are always reported.
    ``intermediate_pump`` carries the coefficient ``(√3+1)/(2·3^{1/4})`` in
    its commonly quoted form; ``intermediate_pump_exact_minimum`` evaluates the
    three-term intermediate spectrum at the same ``K``, whose coefficient is
    ``2·3^{1/4}/3`` (about 15% lower).
    """
    omega = float(omega)
    th = thermal_term(params, thermal)
    m = math.sqrt(float(_mech2(params, omega)))
    o2 = float(_opt2(params, omega))
    o = math.sqrt(o2)
    s_sql = 2.0 * m
    big, small = abs(params.capital_delta), abs(params.small_delta)
    gam = params.gamma
    out = {}
    denom = math.sqrt(small**2 * o2 + 4.0 * gam**2 * big**2)
    if denom > 0:
        k = m * o2 / denom
        out["small_pump"] = (k, float(small_pump_spectrum(params, omega, k, thermal)))
    if small > 0:
        out["small_pump_boundary"] = (
            critical_pumps(params, omega)[0] if big > 0 else None,
            th + s_sql * big / (2.0 * small),
        )
        out["small_pump_detuning_dominated"] = (None, th + s_sql * small / o)
    if big > 0:
        k = m * o2**0.25 / (3.0**0.25 * math.sqrt(big))
        out["intermediate_pump"] = (
            k, th + (math.sqrt(3.0) + 1.0) / (2.0 * 3.0**0.25) * math.sqrt(big) / o2**0.25 * s_sql,
        )
        # exact minimum of the three-term form: (4/3)·(shot at K_opt) = (3^{1/4} + 3^{-3/4})·...
        out["intermediate_pump_exact_minimum"] = (
            k, float(intermediate_pump_spectrum(params, omega, k, thermal)),
        )
        k = 2.0 * gam * m / o
        out["large_pump"] = (k, float(large_pump_spectrum(params, omega, k, thermal)))
        out["large_pump_boundary"] = (o * m / big, th + s_sql * o / (2.0 * big))
    return out


def golden_section(func, lo: float, hi: float, tol: float = 1e-12, max_iter: int = 500):
    """Minimize a unimodal scalar function on ``[lo, hi]``; returns ``(x, f(x))``."""
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = func(d)
    else:
        raise OptimizationError(f"golden-section search did not converge on [{lo!r}, {hi!r}]")
    x = 0.5 * (a + b)
    return x, func(x)


def minimize_over_pump(spectrum, k_lo: float, k_hi: float, grid_points: int = 241):
    """Minimize ``spectrum(K)`` over ``K`` in ``[k_lo, k_hi]`` on a log scale.

    A coarse log grid brackets the minimum, golden-section search refines it.
    Returns ``(K_opt, S_min, at_edge)`` where ``at_edge`` is ``"lower"``,
    ``"upper"`` or ``None``.
    """
    if not (0 < k_lo < k_hi):
        raise OptimizationError(f"invalid pump bracket [{k_lo!r}, {k_hi!r}]")
    u = np.linspace(math.log(k_lo), math.log(k_hi), grid_points)
    values = np.asarray(spectrum(np.exp(u)), dtype=float)
    if not np.all(np.isfinite(values)):
        raise OptimizationError("spectrum not finite on the pump bracket")
    i = int(np.argmin(values))
    if i == 0:
        return k_lo, float(values[0]), "lower"
    if i == grid_points - 1:
        return k_hi, float(values[-1]), "upper"
    u_opt, s_min = golden_section(lambda x: float(spectrum(math.exp(x))), u[i - 1], u[i + 1])
    return math.exp(u_opt), float(s_min), None


@dataclass(frozen=True)
class PumpOptimum:
    """Numerically optimal pump with the asymptotic formulas for comparison.

    ``bounded`` is False when the spectrum keeps decreasing up to the search
    limit (tuned sidebands); ``K_opt`` is then ``inf`` and ``S_min`` the
    thermal floor.
    """

    K_opt: float
    S_min: float
    regime: Regime | None
    bounded: bool
    closed_forms: dict = field(default_factory=dict)


def optimal_pump(params: SystemParams, omega: float, thermal: str = "2n+1") -> PumpOptimum:
    omega = float(omega)
    scale = math.sqrt(float(_mech2(params, omega)))
    lo, hi = K_SEARCH_SPAN[0] * scale, K_SEARCH_SPAN[1] * scale
    k, s, edge = minimize_over_pump(lambda K: detuned_spectrum(params, omega, K, thermal), lo, hi)
    closed = closed_form_optima(params, omega, thermal)
    if edge == "upper":
        return PumpOptimum(math.inf, thermal_term(params, thermal), None, False, closed)
    if edge == "lower":
        raise OptimizationError(f"optimum below search window: K <= {lo!r}")
    return PumpOptimum(k, s, regime_classify(params, omega, k).regime, True, closed)


def regime_window_minimum(params: SystemParams, omega: float, regime: Regime,
                          thermal: str = "2n+1"):
    """Minimum of the detuned spectrum restricted to one regime's pump window."""
    k1, k2 = critical_pumps(params, omega)
    scale = math.sqrt(float(_mech2(params, omega)))
    lo, hi = K_SEARCH_SPAN[0] * scale, K_SEARCH_SPAN[1] * scale
    window = {
        Regime.SMALL_PUMP: (lo, min(k1, hi)),
        Regime.INTERMEDIATE_PUMP: (max(k1, lo), min(k2, hi)),
        Regime.LARGE_PUMP: (max(k2, lo), hi),
    }[regime]
    k, s, _ = minimize_over_pump(lambda K: detuned_spectrum(params, omega, K, thermal), *window)
    return k, s


def detection_threshold(params: SystemParams, pulse, omega, spectrum):
    """Smallest detectable normalized amplitude ``sqrt(S ΔΩ / 2π)`` with ``ΔΩ = 2π/τ``."""
    return np.sqrt(np.asarray(spectrum, dtype=float) * pulse.bandwidth / (2.0 * math.pi))
